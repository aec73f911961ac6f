//! End-to-end pipelines over a frame triplet.
//!
//! [`solve`] runs one pass: disentangle both neighbour frames, sweep the
//! cost volume against `t-1`, optionally fill occluded voxels, extract depth
//! and evaluate the losses. The losses are reported, not minimized; with no
//! network to train, depth is determined by the cost volume alone.
//!
//! [`refine_prior_loop`] adapts cycle-consistent training to inference: the
//! cycle-consistency set `A ∩ S` gates updates of the prior map itself, and
//! the pipeline is re-run with the updated prior.

mod gradcheck;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::costvol::{
    build_cost_volume, build_cost_volume_raw, extract_depth, fill_occlusions, CostVolume, DepthHypotheses,
    DEFAULT_BINS, DEFAULT_FILL_RADIUS,
};
use crate::domd::{disentangle, DisentangledFrame, DomdParams};
use crate::error::{Error, Result};
use crate::geometry::{warp_image, DepthMap, Mask};
use crate::losses::{
    cycle_consistency, cycle_set, masked_photometric, min_reprojection_loss, occlusion_aware_loss, photometric_error,
    smoothness, total_loss, ErrorMap, LossReport, LossWeights, PhotometricParams, SourceChoice, CYCLE_THRESHOLD,
};
use crate::metrics::{compute_metrics, MetricOptions};
use crate::scenesim::{Frame, FrameTriplet};

pub use gradcheck::{grad_check, sample_pixels, GradCheckParams, GradCheckReport, GradSample, SkipReason};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HypothesisConfig {
    pub d_min: f64,
    pub d_max: f64,
    pub bins: usize,
}

impl Default for HypothesisConfig {
    /// 96 bins from 20 m inwards in steps of 1/320 m^-1.
    fn default() -> Self {
        Self {
            d_min: 1.0 / (1.0 / 20.0 + (DEFAULT_BINS - 1) as f64 / 320.0),
            d_max: 20.0,
            bins: DEFAULT_BINS,
        }
    }
}

impl HypothesisConfig {
    pub fn build(&self) -> Result<DepthHypotheses> {
        DepthHypotheses::linear_inverse(self.d_min, self.d_max, self.bins)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorUpdate {
    /// Overwrite the prior with the prediction on `A ∩ S`.
    Replace,
    /// Move the prior a fraction `damping` of the way towards the prediction.
    Damped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub use_domd: bool,
    pub use_cv_fill: bool,
    pub loss_switching: bool,
    pub loss_masking: bool,
    pub use_cycle: bool,
    pub hypotheses: HypothesisConfig,
    pub fill_radius: usize,
    /// Refinement iterations of the prior loop.
    pub iterations: usize,
    pub prior_update: PriorUpdate,
    pub damping: f64,
    pub close_pinholes: bool,
    pub cycle_threshold: f64,
    pub photometric: PhotometricParams,
    pub weights: LossWeights,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            use_domd: true,
            use_cv_fill: true,
            loss_switching: true,
            loss_masking: true,
            use_cycle: true,
            hypotheses: HypothesisConfig::default(),
            fill_radius: DEFAULT_FILL_RADIUS,
            iterations: 5,
            prior_update: PriorUpdate::Replace,
            damping: 0.5,
            close_pinholes: true,
            cycle_threshold: CYCLE_THRESHOLD,
            photometric: PhotometricParams::default(),
            weights: LossWeights::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        self.hypotheses.build()?;
        self.photometric.validate()?;
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "damping {} outside (0, 1]",
                self.damping
            )));
        }
        if !(self.cycle_threshold.is_finite() && self.cycle_threshold >= 0.0) {
            return Err(Error::InvalidParameter(
                "cycle_threshold must be finite and >= 0".into(),
            ));
        }
        let w = self.weights;
        if ![w.cycle, w.reprojection, w.smoothness]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0)
        {
            return Err(Error::InvalidParameter("loss weights must be finite and >= 0".into()));
        }
        Ok(())
    }

    /// Reads a `[solver]` table on top of the defaults.
    pub fn from_table(table: &toml::Table) -> Result<Self> {
        let cfg: SolverConfig = toml::Value::Table(table.clone())
            .try_into()
            .map_err(|e: toml::de::Error| Error::ConfigParse {
                path: "[solver]".into(),
                message: e.message().to_string(),
            })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Named toggle set. The five main variants nest cumulatively.
    pub fn variant(name: &str) -> Result<Self> {
        let toggles = |domd, fill, switching, masking, cycle| SolverConfig {
            use_domd: domd,
            use_cv_fill: fill,
            loss_switching: switching,
            loss_masking: masking,
            use_cycle: cycle,
            ..SolverConfig::default()
        };
        Ok(match name {
            "full" => toggles(true, true, true, true, true),
            "no_cycle" => toggles(true, true, true, true, false),
            "no_fill" => toggles(true, false, true, true, false),
            "no_switch_mask" => toggles(true, false, false, false, false),
            "no_domd" => toggles(false, false, false, false, false),
            "domd_switch" => toggles(true, false, true, false, false),
            "domd_mask" => toggles(true, false, false, true, false),
            "domd_fill" => toggles(true, true, false, false, false),
            _ => {
                return Err(Error::InvalidParameter(format!(
                    "unknown variant {name:?}; expected one of {}",
                    VARIANTS.join(", ")
                )))
            }
        })
    }

    /// Applies the toggles of `variant` to `self`, keeping every other field.
    pub fn with_variant(&self, name: &str) -> Result<Self> {
        let v = Self::variant(name)?;
        Ok(Self {
            use_domd: v.use_domd,
            use_cv_fill: v.use_cv_fill,
            loss_switching: v.loss_switching,
            loss_masking: v.loss_masking,
            use_cycle: v.use_cycle,
            ..self.clone()
        })
    }
}

pub const VARIANTS: [&str; 8] = [
    "full",
    "no_cycle",
    "no_fill",
    "no_switch_mask",
    "no_domd",
    "domd_switch",
    "domd_mask",
    "domd_fill",
];

/// Scalar record of one solver pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationReport {
    pub iteration: usize,
    pub l_c: f64,
    pub l_or: f64,
    pub l_s: f64,
    pub l_total: f64,
    pub empty_support: bool,
    /// Size of `A ∩ S` against the prior used in this pass.
    pub cycle_pixels: usize,
    /// Abs Rel of the prediction on the dynamic mask, if non-empty.
    pub object_abs_rel: Option<f64>,
}

/// Intermediate products of the last pass.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveArtifacts {
    pub prev: DisentangledFrame,
    pub next: DisentangledFrame,
    pub cost_volume: CostVolume,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub depth: DepthMap,
    /// Prior after refinement; equal to the input prior for a single pass.
    pub prior: DepthMap,
    pub iterations: Vec<IterationReport>,
    pub losses: LossReport,
    pub artifacts: SolveArtifacts,
    /// Wall-clock seconds per stage, summed over iterations.
    pub timings: Vec<(&'static str, f64)>,
    /// The divergence guard stopped the loop.
    pub diverged: bool,
}

fn add_timing(timings: &mut Vec<(&'static str, f64)>, stage: &'static str, start: Instant) {
    let dt = start.elapsed().as_secs_f64();
    match timings.iter_mut().find(|t| t.0 == stage) {
        Some(t) => t.1 += dt,
        None => timings.push((stage, dt)),
    }
}

struct Pass {
    depth: DepthMap,
    losses: LossReport,
    artifacts: SolveArtifacts,
    cycle_pixels: usize,
}

fn run_pass(
    triplet: &FrameTriplet,
    prior: &DepthMap,
    cfg: &SolverConfig,
    timings: &mut Vec<(&'static str, f64)>,
) -> Result<Pass> {
    let k = &triplet.intrinsics;
    let (w, h) = (k.width, k.height);
    let i_t = triplet.image(Frame::Current);
    let s_t = triplet.mask(Frame::Current);
    let hyp = cfg.hypotheses.build()?;

    let start = Instant::now();
    let domd = DomdParams {
        close_pinholes: cfg.close_pinholes,
    };
    let reference = |f: Frame| -> Result<DisentangledFrame> {
        if cfg.use_domd {
            disentangle(
                triplet.image(f),
                i_t,
                triplet.mask(f),
                s_t,
                prior,
                &triplet.pose_to(f),
                k,
                domd,
            )
        } else {
            Ok(DisentangledFrame::passthrough(triplet.image(f)))
        }
    };
    let (prev, next) = (reference(Frame::Prev)?, reference(Frame::Next)?);
    add_timing(timings, "domd", start);

    let start = Instant::now();
    let cost_volume = if cfg.use_cv_fill {
        fill_occlusions(
            &build_cost_volume(i_t, &prev, &triplet.pose_to_prev, k, &hyp)?,
            cfg.fill_radius,
        )
    } else {
        // Holes stay in the data as black pixels.
        build_cost_volume_raw(i_t, &prev.image, None, &triplet.pose_to_prev, k, &hyp)?
    };
    add_timing(timings, "cost_volume", start);

    let start = Instant::now();
    let depth = extract_depth(&cost_volume, &hyp)?;
    add_timing(timings, "extract", start);

    let start = Instant::now();
    let error_for = |src: &DisentangledFrame, pose| -> Result<(ErrorMap, Mask)> {
        let warp = warp_image(&src.image, &depth, pose, k, Some(&src.masks.occluded))?;
        let o_a = warp.invalid_mask();
        let e = if cfg.loss_masking {
            masked_photometric(i_t, &warp.image, &o_a, &cfg.photometric)?
        } else {
            photometric_error(i_t, &warp.image, &cfg.photometric)?
        };
        Ok((e, o_a))
    };
    let (e_prev, o_prev) = error_for(&prev, &triplet.pose_to_prev)?;
    let (e_next, o_next) = error_for(&next, &triplet.pose_to_next)?;
    let (l_or, e_or_map, source_choice, empty_support) = if cfg.loss_switching {
        let r = occlusion_aware_loss(&e_prev, &e_next, &o_prev, &o_prev.not(), &o_next, &o_next.not())?;
        (r.loss, r.map, r.choice, r.empty_support)
    } else {
        let l = min_reprojection_loss(&e_prev, &e_next)?;
        let values = e_prev
            .values
            .iter()
            .zip(&e_next.values)
            .map(|(a, b)| a.min(*b))
            .collect();
        (
            l,
            ErrorMap::new(w, h, values, Mask::full(w, h))?,
            vec![SourceChoice::Min; w * h],
            false,
        )
    };
    let (l_c, cycle_pixels) = if cfg.use_cycle {
        let a = cycle_set(&depth, prior, s_t, cfg.cycle_threshold)?;
        (cycle_consistency(&depth, prior, s_t, cfg.cycle_threshold)?, a.count())
    } else {
        (0.0, 0)
    };
    let l_s = smoothness(&depth, i_t)?;
    let (l_total, [l_c, l_or, l_s]) = total_loss(l_c, l_or, l_s, &cfg.weights);
    add_timing(timings, "losses", start);

    Ok(Pass {
        depth,
        losses: LossReport {
            l_c,
            l_or,
            l_s,
            l_total,
            e_maps: [e_prev, e_next],
            e_or_map,
            source_choice,
            empty_support,
        },
        artifacts: SolveArtifacts {
            prev,
            next,
            cost_volume,
        },
        cycle_pixels,
    })
}

fn check_inputs(triplet: &FrameTriplet, prior: &DepthMap, cfg: &SolverConfig) -> Result<()> {
    triplet.validate()?;
    cfg.validate()?;
    prior.check_dims("depth prior", triplet.intrinsics.width, triplet.intrinsics.height)
}

fn object_abs_rel(triplet: &FrameTriplet, depth: &DepthMap) -> Option<f64> {
    let s = triplet.mask(Frame::Current);
    if s.is_empty() {
        return None;
    }
    compute_metrics(depth, triplet.depth(Frame::Current), Some(s), &MetricOptions::default())
        .ok()
        .map(|m| m.abs_rel)
}

fn report(iteration: usize, pass: &Pass, triplet: &FrameTriplet) -> IterationReport {
    IterationReport {
        iteration,
        l_c: pass.losses.l_c,
        l_or: pass.losses.l_or,
        l_s: pass.losses.l_s,
        l_total: pass.losses.l_total,
        empty_support: pass.losses.empty_support,
        cycle_pixels: pass.cycle_pixels,
        object_abs_rel: object_abs_rel(triplet, &pass.depth),
    }
}

/// One pass of the pipeline. The prior is returned unchanged.
pub fn solve(triplet: &FrameTriplet, prior: &DepthMap, cfg: &SolverConfig) -> Result<SolveResult> {
    check_inputs(triplet, prior, cfg)?;
    let mut timings = Vec::new();
    let pass = run_pass(triplet, prior, cfg, &mut timings)?;
    Ok(SolveResult {
        iterations: vec![report(1, &pass, triplet)],
        depth: pass.depth,
        prior: prior.clone(),
        losses: pass.losses,
        artifacts: pass.artifacts,
        timings,
        diverged: false,
    })
}

/// Iterates solve and prior updates on `A ∩ S` for up to `cfg.iterations`
/// passes. Stops early once `A ∩ S` is empty, or when the dynamic-region
/// Abs Rel has risen three passes in a row (reported as `diverged`).
pub fn refine_prior_loop(triplet: &FrameTriplet, prior0: &DepthMap, cfg: &SolverConfig) -> Result<SolveResult> {
    if cfg.iterations == 0 {
        return Err(Error::InvalidParameter(
            "the refinement loop needs at least one iteration".into(),
        ));
    }
    check_inputs(triplet, prior0, cfg)?;
    let cfg_cycle = SolverConfig {
        use_cycle: true,
        ..cfg.clone()
    };
    let s_t = triplet.mask(Frame::Current);
    let mut prior = prior0.clone();
    let mut timings = Vec::new();
    let mut iterations = Vec::new();
    let mut rises = 0;
    let mut diverged = false;
    let mut last: Option<Pass> = None;
    for it in 1..=cfg.iterations {
        let pass = run_pass(triplet, &prior, &cfg_cycle, &mut timings)?;
        let rep = report(it, &pass, triplet);
        if let (Some(prev), Some(now)) = (
            iterations.last().and_then(|r: &IterationReport| r.object_abs_rel),
            rep.object_abs_rel,
        ) {
            rises = if now > prev { rises + 1 } else { 0 };
        }
        iterations.push(rep);
        let a = cycle_set(&pass.depth, &prior, s_t, cfg.cycle_threshold)?;
        let done = a.is_empty();
        if rises >= 3 {
            diverged = true;
        }
        if !done && !diverged && it < cfg.iterations {
            for i in (0..a.data().len()).filter(|&i| a.at(i)) {
                let (d, p) = (pass.depth.depths()[i], prior.depths()[i]);
                let new = match cfg.prior_update {
                    PriorUpdate::Replace => d,
                    PriorUpdate::Damped => p + cfg.damping * (d - p),
                };
                prior.set(i, Some(new));
            }
        }
        last = Some(pass);
        if done || diverged {
            break;
        }
    }
    let pass = last.expect("at least one iteration ran");
    Ok(SolveResult {
        depth: pass.depth,
        prior,
        iterations,
        losses: pass.losses,
        artifacts: pass.artifacts,
        timings,
        diverged,
    })
}

/// Single pass or refinement loop, as the configuration asks.
pub fn run(triplet: &FrameTriplet, prior: &DepthMap, cfg: &SolverConfig) -> Result<SolveResult> {
    if cfg.use_cycle && cfg.iterations > 0 {
        refine_prior_loop(triplet, prior, cfg)
    } else {
        solve(triplet, prior, cfg)
    }
}
