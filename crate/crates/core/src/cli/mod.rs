//! The `domd` command-line front end.
//!
//! Exit codes: 0 on success, 1 for invalid input (bad flags, configs or
//! files that fail validation), 2 for runtime failures (I/O, a failed
//! gradient check, empty evaluation support).
//!
//! Settings resolve as flag > config file > built-in default.
//! `DOMD_BENCH_THREADS` caps the worker pool; results do not depend on it.

mod manifest;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

pub use manifest::{config_hash, OutputEntry, RunManifest};

use crate::error::{Error, Result};
use crate::geometry::{DepthMap, Mask};
use crate::io;
use crate::metrics::{compute_metrics, error_map, MetricOptions, MetricReport};
use crate::scenesim::{
    self, load_scene, make_prior, render, suite, Frame, FrameTriplet, PriorMode, PriorSpec, SceneSpec,
};
use crate::solver::{self, grad_check, sample_pixels, GradCheckParams, SolveResult, SolverConfig};

pub const THREADS_ENV: &str = "DOMD_BENCH_THREADS";

/// Column order of every metrics CSV.
pub const METRICS_HEADER: [&str; 11] = [
    "scene_id", "variant", "region", "abs_rel", "sq_rel", "rmse", "rmse_log", "delta1", "delta2", "delta3", "n_pixels",
];

#[derive(Debug, Parser)]
#[command(
    name = "domd",
    version,
    about = "Depth from frame triplets with dynamic object motion disentanglement"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a scene into a scene directory.
    Render(RenderArgs),
    /// Estimate depth for the middle frame of a scene.
    Solve(SolveArgs),
    /// Score a depth map against a scene's ground truth.
    Eval(EvalArgs),
    /// Run the toggle grid over a seeded suite.
    Ablate(AblateArgs),
    /// Check the analytic photometric gradient against finite differences.
    Gradcheck(GradcheckArgs),
}

/// Where a scene comes from. At most one source may be given.
#[derive(Debug, Clone, Args)]
pub struct SceneSource {
    /// Scene TOML file.
    #[arg(long, conflicts_with_all = ["scene", "suite"])]
    pub config: Option<PathBuf>,
    /// Scene directory written by `render`.
    #[arg(long, conflicts_with = "suite")]
    pub scene: Option<PathBuf>,
    /// Scene `INDEX` of a standard suite, as `static:INDEX` or `moving:INDEX`.
    #[arg(long, value_name = "KIND:INDEX")]
    pub suite: Option<String>,
    /// Suite seed, and seed of prior noise.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SolverFlags {
    /// Named toggle set applied before the individual flags.
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub no_domd: bool,
    #[arg(long)]
    pub no_fill: bool,
    #[arg(long)]
    pub no_switching: bool,
    #[arg(long)]
    pub no_masking: bool,
    #[arg(long)]
    pub no_cycle: bool,
    /// Refinement iterations of the prior loop (0 = single pass).
    #[arg(long, value_name = "N")]
    pub iters: Option<usize>,
    /// Depth prior: exact, noise:SIGMA or bias:BETA.
    #[arg(long, value_name = "MODE")]
    pub prior: Option<PriorMode>,
}

impl SolverFlags {
    fn apply(&self, base: &SolverConfig) -> Result<SolverConfig> {
        let mut cfg = match &self.variant {
            Some(v) => base.with_variant(v)?,
            None => base.clone(),
        };
        cfg.use_domd &= !self.no_domd;
        cfg.use_cv_fill &= !self.no_fill;
        cfg.loss_switching &= !self.no_switching;
        cfg.loss_masking &= !self.no_masking;
        cfg.use_cycle &= !self.no_cycle;
        if let Some(n) = self.iters {
            cfg.iterations = n;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[command(flatten)]
    pub source: SceneSource,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub source: SceneSource,
    #[command(flatten)]
    pub flags: SolverFlags,
    /// Write these cost-volume layers as `cv_<bin>.pgm`, comma-separated.
    /// Costs are normalized by the volume maximum; unusable voxels are black.
    #[arg(long, value_name = "BINS", value_delimiter = ',')]
    pub dump_slices: Vec<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub source: SceneSource,
    /// Predicted depth (PFM).
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long, default_value_t = 80.0)]
    pub clip_max: f64,
    #[arg(long)]
    pub median_scaling: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Suite TOML file; the standard moving suite when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of suite scenes.
    #[arg(long)]
    pub count: Option<usize>,
    /// Comma-separated variant names.
    #[arg(long, value_delimiter = ',')]
    pub variants: Option<Vec<String>>,
    #[arg(long, value_name = "N")]
    pub iters: Option<usize>,
    #[arg(long, value_name = "MODE")]
    pub prior: Option<PriorMode>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[command(flatten)]
    pub source: SceneSource,
    /// Number of sampled pixels.
    #[arg(long, default_value_t = 200)]
    pub samples: usize,
    /// Finite-difference step relative to depth.
    #[arg(long, default_value_t = 1e-4)]
    pub eps: f64,
    /// Largest tolerated relative error.
    #[arg(long, default_value_t = 1e-3)]
    pub threshold: f64,
    #[arg(long)]
    pub out: PathBuf,
}

/// A loaded scene with what the solver needs alongside it.
pub struct LoadedScene {
    pub id: String,
    pub triplet: FrameTriplet,
    pub prior: PriorSpec,
    pub solver_table: Option<toml::Table>,
    /// Canonical description of the input for the manifest hash.
    pub descriptor: serde_json::Value,
}

fn parse_suite_ref(s: &str) -> Result<(suite::SuiteKind, usize)> {
    let bad = || Error::InvalidParameter(format!("--suite {s:?}: expected KIND:INDEX"));
    let (kind, index) = s.split_once(':').ok_or_else(bad)?;
    Ok((kind.parse()?, index.parse().map_err(|_| bad())?))
}

fn suite_scene(kind: suite::SuiteKind, index: usize, seed: u64) -> SceneSpec {
    suite::standard_suite(kind, index + 1, seed)
        .pop()
        .expect("suite has index + 1 scenes")
}

impl SceneSource {
    /// The scene spec for sources that have one; scene directories do not.
    fn spec(&self) -> Result<Option<(String, SceneSpec, Option<toml::Table>)>> {
        if let Some(path) = &self.config {
            let (spec, table) = load_scene(path)?;
            let id = path
                .file_stem()
                .map_or("scene".into(), |s| s.to_string_lossy().into_owned());
            return Ok(Some((id, spec, table)));
        }
        if let Some(s) = &self.suite {
            let (kind, index) = parse_suite_ref(s)?;
            let spec = suite_scene(kind, index, self.seed.unwrap_or(0));
            let name = serde_json::to_value(kind)?.as_str().unwrap_or("suite").to_string();
            return Ok(Some((format!("{name}-{index:02}"), spec, None)));
        }
        Ok(None)
    }

    pub fn load(&self) -> Result<LoadedScene> {
        if let Some(dir) = &self.scene {
            let triplet = io::read_scene_dir(dir)?;
            let mut files = serde_json::Map::new();
            for name in io::scene_files() {
                files.insert(
                    name.clone(),
                    manifest::sha256_hex(&io::read_bytes(&dir.join(&name))?).into(),
                );
            }
            let id = dir
                .file_name()
                .map_or("scene".into(), |s| s.to_string_lossy().into_owned());
            let prior = PriorSpec {
                seed: self.seed.unwrap_or(0),
                ..PriorSpec::default()
            };
            return Ok(LoadedScene {
                id,
                triplet,
                prior,
                solver_table: None,
                descriptor: serde_json::json!({ "scene_dir": files }),
            });
        }
        let Some((id, spec, solver_table)) = self.spec()? else {
            return Err(Error::InvalidParameter(
                "one of --config, --scene or --suite is required".into(),
            ));
        };
        let mut prior = spec.prior;
        if let Some(seed) = self.seed {
            prior.seed = seed;
        }
        Ok(LoadedScene {
            id,
            triplet: render(&spec)?,
            prior,
            descriptor: serde_json::json!({ "scene": spec, "solver_table": solver_table }),
            solver_table,
        })
    }
}

fn create_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Writes named blobs into `out` and records them.
fn write_outputs<N: AsRef<str>>(out: &Path, files: &[(N, Vec<u8>)], manifest: &mut RunManifest) -> Result<()> {
    for (name, bytes) in files {
        io::write_bytes(&out.join(name.as_ref()), bytes)?;
        manifest.add_output(name.as_ref(), bytes);
    }
    Ok(())
}

fn metric_row(scene: &str, variant: &str, region: &str, m: Option<&MetricReport>) -> Vec<String> {
    let mut row = vec![scene.to_string(), variant.to_string(), region.to_string()];
    match m {
        Some(m) => {
            row.extend(m.values().iter().map(|v| v.to_string()));
            row.push(m.n_pixels.to_string());
        }
        None => {
            row.extend(std::iter::repeat_n("NaN".to_string(), 7));
            row.push("0".into());
        }
    }
    row
}

/// Rows for the `all`, `dynamic` and `static` regions. A region without
/// valid pixels yields a NaN row with `n_pixels = 0`.
pub fn region_rows(
    scene: &str,
    variant: &str,
    pred: &DepthMap,
    gt: &DepthMap,
    s: &Mask,
    opts: &MetricOptions,
) -> Result<Vec<Vec<String>>> {
    let regions = [
        ("all", Mask::full(s.width(), s.height())),
        ("dynamic", s.clone()),
        ("static", s.not()),
    ];
    let mut rows = Vec::new();
    for (name, mask) in &regions {
        let m = match compute_metrics(pred, gt, Some(mask), opts) {
            Ok(m) => Some(m),
            Err(Error::EmptySupport(_)) => None,
            Err(e) => return Err(e),
        };
        rows.push(metric_row(scene, variant, name, m.as_ref()));
    }
    Ok(rows)
}

fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| Error::Csv(e.into_error().into()))
}

fn opt_f64(v: Option<f64>) -> String {
    v.map_or("NaN".into(), |x| x.to_string())
}

fn loss_csv(result: &SolveResult) -> Result<Vec<u8>> {
    let header = [
        "iteration",
        "l_c",
        "l_or",
        "l_s",
        "l_total",
        "cycle_pixels",
        "object_abs_rel",
        "empty_support",
    ];
    let rows: Vec<Vec<String>> = result
        .iterations
        .iter()
        .map(|r| {
            vec![
                r.iteration.to_string(),
                r.l_c.to_string(),
                r.l_or.to_string(),
                r.l_s.to_string(),
                r.l_total.to_string(),
                r.cycle_pixels.to_string(),
                opt_f64(r.object_abs_rel),
                r.empty_support.to_string(),
            ]
        })
        .collect();
    csv_bytes(&header, &rows)
}

fn cmd_render(args: &RenderArgs) -> Result<RunManifest> {
    let scene = args.source.load()?;
    create_out(&args.out)?;
    let t = &scene.triplet;
    let mut m = RunManifest::new(
        "render",
        &serde_json::json!({ "input": scene.descriptor }),
        scene.prior.seed,
    )?;
    let mut files: Vec<(String, Vec<u8>)> = Vec::new();
    for f in Frame::ALL {
        files.push((format!("{}.ppm", f.name()), io::encode_pnm(t.image(f))));
    }
    for f in Frame::ALL {
        files.push((format!("depth_{}.pfm", f.name()), io::encode_pfm(t.depth(f))));
    }
    for f in Frame::ALL {
        files.push((format!("mask_{}.pgm", f.name()), io::encode_mask(t.mask(f))));
    }
    files.push((
        "camera.txt".into(),
        io::encode_sidecar(&t.intrinsics, &t.pose_to_prev, &t.pose_to_next).into_bytes(),
    ));
    write_outputs(&args.out, &files, &mut m)?;
    Ok(m)
}

fn resolve_solver(scene: &LoadedScene, flags: &SolverFlags) -> Result<(SolverConfig, PriorSpec)> {
    let base = match &scene.solver_table {
        Some(t) => SolverConfig::from_table(t)?,
        None => SolverConfig::default(),
    };
    let cfg = flags.apply(&base)?;
    let mut prior = scene.prior;
    if let Some(mode) = flags.prior {
        prior.mode = mode;
    }
    prior.mode.validate()?;
    Ok((cfg, prior))
}

fn cmd_solve(args: &SolveArgs) -> Result<RunManifest> {
    let scene = args.source.load()?;
    let (cfg, prior_spec) = resolve_solver(&scene, &args.flags)?;
    let t = &scene.triplet;
    let gt = t.depth(Frame::Current);
    let prior = make_prior(gt, prior_spec.mode, prior_spec.seed)?;
    let result = solver::run(t, &prior, &cfg)?;
    let cv = &result.artifacts.cost_volume;
    if let Some(&p) = args.dump_slices.iter().find(|&&p| p >= cv.bins()) {
        return Err(Error::InvalidParameter(format!(
            "--dump-slices: bin {p} out of range 0..{}",
            cv.bins()
        )));
    }
    create_out(&args.out)?;
    let effective = serde_json::json!({ "input": scene.descriptor, "solver": cfg, "prior": prior_spec });
    let mut m = RunManifest::new("solve", &effective, prior_spec.seed)?;
    m.timings = result.timings.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    m.diverged = Some(result.diverged);
    let rows = region_rows(
        &scene.id,
        "solve",
        &result.depth,
        gt,
        t.mask(Frame::Current),
        &MetricOptions::default(),
    )?;
    let mut files = vec![
        ("depth.pfm".to_string(), io::encode_pfm(&result.depth)),
        ("prior.pfm".into(), io::encode_pfm(&result.prior)),
        ("error_map.ppm".into(), io::encode_pnm(&error_map(&result.depth, gt)?)),
        ("losses.csv".into(), loss_csv(&result)?),
        ("metrics.csv".into(), csv_bytes(&METRICS_HEADER, &rows)?),
    ];
    for &p in &args.dump_slices {
        files.push((format!("cv_{p:02}.pgm"), io::encode_pnm(&cv.slice_image(p))));
    }
    write_outputs(&args.out, &files, &mut m)?;
    let all = &rows[0];
    println!("{}: abs_rel {} over {} px", scene.id, all[3], all[10]);
    Ok(m)
}

fn cmd_eval(args: &EvalArgs) -> Result<RunManifest> {
    let scene = args.source.load()?;
    let pred = io::read_depth(&args.pred)?;
    let t = &scene.triplet;
    let opts = MetricOptions {
        clip_max: args.clip_max,
        median_scaling: args.median_scaling,
        ..MetricOptions::default()
    };
    let rows = region_rows(
        &scene.id,
        "eval",
        &pred,
        t.depth(Frame::Current),
        t.mask(Frame::Current),
        &opts,
    )?;
    create_out(&args.out)?;
    let pred_hash = manifest::sha256_hex(&io::read_bytes(&args.pred)?);
    let effective = serde_json::json!({ "input": scene.descriptor, "pred": pred_hash, "metrics": opts });
    let mut m = RunManifest::new("eval", &effective, scene.prior.seed)?;
    let files = [
        ("metrics.csv", csv_bytes(&METRICS_HEADER, &rows)?),
        (
            "error_map.ppm",
            io::encode_pnm(&error_map(&pred, t.depth(Frame::Current))?),
        ),
    ];
    write_outputs(&args.out, &files, &mut m)?;
    Ok(m)
}

/// An ablation suite file.
///
/// ```toml
/// [suite]
/// kind = "moving"        # static | moving
/// count = 20
/// seed = 0
/// variants = ["full", "no_cycle", "no_fill", "no_switch_mask", "no_domd"]
///
/// [prior]
/// mode = "exact"
///
/// [solver]               # optional, shared by every variant
/// ```
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    #[serde(default)]
    pub suite: SuiteSection,
    #[serde(default)]
    pub prior: PriorSpec,
    #[serde(default)]
    pub solver: Option<toml::Table>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SuiteSection {
    pub kind: suite::SuiteKind,
    pub count: usize,
    pub seed: u64,
    pub variants: Vec<String>,
}

/// The five nested variants, strongest first.
pub const MAIN_VARIANTS: [&str; 5] = ["full", "no_cycle", "no_fill", "no_switch_mask", "no_domd"];

impl Default for SuiteSection {
    fn default() -> Self {
        Self {
            kind: suite::SuiteKind::Moving,
            count: suite::SUITE_SIZE,
            seed: 0,
            variants: MAIN_VARIANTS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

pub fn load_suite_config(path: &Path) -> Result<SuiteConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    scenesim::parse_toml(&text, path)
}

fn cmd_ablate(args: &AblateArgs) -> Result<RunManifest> {
    let mut sc = match &args.config {
        Some(p) => load_suite_config(p)?,
        None => SuiteConfig::default(),
    };
    if let Some(s) = args.seed {
        sc.suite.seed = s;
    }
    if let Some(c) = args.count {
        sc.suite.count = c;
    }
    if let Some(v) = &args.variants {
        sc.suite.variants = v.clone();
    }
    if let Some(p) = args.prior {
        sc.prior.mode = p;
    }
    sc.prior.mode.validate()?;
    if sc.suite.count == 0 || sc.suite.variants.is_empty() {
        return Err(Error::InvalidParameter(
            "the suite needs at least one scene and one variant".into(),
        ));
    }
    let mut base = match &sc.solver {
        Some(t) => SolverConfig::from_table(t)?,
        None => SolverConfig::default(),
    };
    if let Some(n) = args.iters {
        base.iterations = n;
    }
    let configs: Vec<(String, SolverConfig)> = sc
        .suite
        .variants
        .iter()
        .map(|v| Ok((v.clone(), base.with_variant(v)?)))
        .collect::<Result<_>>()?;

    let specs = suite::standard_suite(sc.suite.kind, sc.suite.count, sc.suite.seed);
    let kind = serde_json::to_value(sc.suite.kind)?
        .as_str()
        .unwrap_or("suite")
        .to_string();
    let mut rows = Vec::new();
    let mut dynamic_sum = vec![(0.0, 0usize); configs.len()];
    let mut m = RunManifest::new(
        "ablate",
        &serde_json::json!({ "suite": sc, "variants": configs.iter().map(|c| &c.1).collect::<Vec<_>>() }),
        sc.suite.seed,
    )?;
    for (i, spec) in specs.iter().enumerate() {
        let id = format!("{kind}-{i:02}");
        let t = render(spec)?;
        let gt = t.depth(Frame::Current);
        let prior = make_prior(gt, sc.prior.mode, sc.prior.seed.wrapping_add(i as u64))?;
        for (k, (name, cfg)) in configs.iter().enumerate() {
            let r = solver::run(&t, &prior, cfg)?;
            for (stage, dt) in &r.timings {
                *m.timings.entry(stage.to_string()).or_insert(0.0) += dt;
            }
            let region = region_rows(
                &id,
                name,
                &r.depth,
                gt,
                t.mask(Frame::Current),
                &MetricOptions::default(),
            )?;
            if let Ok(v) = region[1][3].parse::<f64>() {
                if v.is_finite() {
                    dynamic_sum[k].0 += v;
                    dynamic_sum[k].1 += 1;
                }
            }
            rows.extend(region);
        }
    }
    create_out(&args.out)?;
    write_outputs(
        &args.out,
        &[("ablation.csv", csv_bytes(&METRICS_HEADER, &rows)?)],
        &mut m,
    )?;
    println!("{:<16} {:>12}", "variant", "dyn abs_rel");
    for ((name, _), (sum, n)) in configs.iter().zip(&dynamic_sum) {
        let mean = if *n > 0 { sum / *n as f64 } else { f64::NAN };
        println!("{name:<16} {mean:>12.6}");
    }
    Ok(m)
}

fn cmd_gradcheck(args: &GradcheckArgs) -> Result<RunManifest> {
    let scene = args.source.load()?;
    let t = &scene.triplet;
    let params = GradCheckParams {
        eps_rel: args.eps,
        threshold: args.threshold,
        ..GradCheckParams::default()
    };
    let pixels = sample_pixels(t, args.samples, scene.prior.seed);
    if pixels.len() < args.samples {
        eprintln!(
            "warning: only {} of {} requested pixels could be sampled",
            pixels.len(),
            args.samples
        );
    }
    let report = grad_check(t, t.depth(Frame::Current), &pixels, &params)?;
    if report.n_checked < pixels.len() {
        eprintln!(
            "warning: {} of {} samples skipped as degenerate; {} checked",
            report.n_skipped,
            pixels.len(),
            report.n_checked
        );
    }
    create_out(&args.out)?;
    let effective = serde_json::json!({ "input": scene.descriptor, "params": params, "samples": args.samples });
    let mut m = RunManifest::new("gradcheck", &effective, scene.prior.seed)?;
    let sample_rows: Vec<Vec<String>> = report
        .samples
        .iter()
        .map(|s| {
            let skipped = s.skipped.map_or(String::new(), |r| {
                serde_json::to_value(r)
                    .ok()
                    .and_then(|v| v.as_str().map(String::from))
                    .unwrap_or_default()
            });
            vec![
                s.x.to_string(),
                s.y.to_string(),
                s.depth.to_string(),
                s.source.name().to_string(),
                s.analytic.to_string(),
                s.numeric.to_string(),
                s.rel_err.to_string(),
                skipped,
            ]
        })
        .collect();
    let sweep_rows: Vec<Vec<String>> = report
        .sweep
        .iter()
        .map(|(e, err)| vec![e.to_string(), err.to_string()])
        .collect();
    let summary = serde_json::json!({
        "n_samples": report.samples.len(),
        "n_checked": report.n_checked,
        "n_skipped": report.n_skipped,
        "max_rel_err": report.max_rel_err,
        "pass_fraction": report.pass_fraction,
        "convergence_order": report.convergence_order,
        "threshold": args.threshold,
        "passed": report.passed(args.threshold),
    });
    let files = [
        (
            "gradcheck.csv",
            csv_bytes(
                &["x", "y", "depth", "source", "analytic", "numeric", "rel_err", "skipped"],
                &sample_rows,
            )?,
        ),
        ("sweep.csv", csv_bytes(&["eps_rel", "median_abs_err"], &sweep_rows)?),
        ("report.json", serde_json::to_vec_pretty(&summary)?),
    ];
    write_outputs(&args.out, &files, &mut m)?;
    println!(
        "checked {} of {} samples, max rel err {:e}, order {}",
        report.n_checked,
        report.samples.len(),
        report.max_rel_err,
        report.convergence_order.map_or("n/a".into(), |o| format!("{o:.3}"))
    );
    if !report.passed(args.threshold) {
        m.write(&args.out)?;
        return Err(Error::GradCheckFailed {
            max_rel_err: report.max_rel_err,
            threshold: args.threshold,
        });
    }
    Ok(m)
}

fn out_dir(cmd: &Command) -> &Path {
    match cmd {
        Command::Render(a) => &a.out,
        Command::Solve(a) => &a.out,
        Command::Eval(a) => &a.out,
        Command::Ablate(a) => &a.out,
        Command::Gradcheck(a) => &a.out,
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let manifest = match &cli.command {
        Command::Render(a) => cmd_render(a)?,
        Command::Solve(a) => cmd_solve(a)?,
        Command::Eval(a) => cmd_eval(a)?,
        Command::Ablate(a) => cmd_ablate(a)?,
        Command::Gradcheck(a) => cmd_gradcheck(a)?,
    };
    manifest.write(out_dir(&cli.command))
}

fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Error::InvalidParameter(format!("{THREADS_ENV}={v:?} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::InvalidParameter(format!("cannot size the worker pool: {e}")))
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match init_threads().and_then(|_| run(&cli)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
