use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const ONE_PLANE: &str = r#"
spec_version = 1

[camera]
fx = 60.0
fy = 60.0
cx = 23.5
cy = 15.5
width = 48
height = 32

[[plane]]
depth = 6.0
texture = { seed = 9, cell = 4.0 }
"#;

fn domd(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_domd"))
        .args(args)
        .current_dir(dir)
        .env("DOMD_BENCH_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records()
        .map(|rec| rec.unwrap().iter().map(str::to_owned).collect())
        .collect()
}

#[test]
fn static_config_without_motion_renders_identical_frames() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("scene.toml"), ONE_PLANE).unwrap();
    let o = domd(dir.path(), &["render", "--config", "scene.toml", "--out", "out"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let read = |f: &str| fs::read(dir.path().join("out").join(f)).unwrap();
    let cur = read("cur.ppm");
    assert!(cur.starts_with(b"P6\n48 32\n255\n"));
    assert_eq!(read("prev.ppm"), cur);
    assert_eq!(read("next.ppm"), cur);
    assert!(dir.path().join("out/manifest.json").exists());
}

#[test]
fn missing_config_key_is_a_usage_error_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("scene.toml"), ONE_PLANE.replace("fy = 60.0\n", "")).unwrap();
    let o = domd(dir.path(), &["render", "--config", "scene.toml", "--out", "out"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("`fy`"), "{}", stderr(&o));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(domd(dir.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(domd(dir.path(), &["--help"]).status.code(), Some(0));
    let o = domd(dir.path(), &["solve", "--scene", "nowhere", "--out", "x"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = Command::new(env!("CARGO_BIN_EXE_domd"))
        .args(["render", "--suite", "static:0", "--out", "x"])
        .current_dir(dir.path())
        .env("DOMD_BENCH_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(
        domd(dir.path(), &["render", "--suite", "cubes:0", "--out", "x"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn solve_writes_metrics_and_no_domd_is_worse_on_objects() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let o = domd(p, &["render", "--suite", "moving:1", "--out", "scene"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for (out, extra) in [("with", None), ("without", Some("--no-domd"))] {
        let mut args = vec!["solve", "--scene", "scene", "--out", out];
        args.extend(extra);
        let o = domd(p, &args);
        assert!(o.status.success(), "{}", stderr(&o));
        for f in [
            "depth.pfm",
            "prior.pfm",
            "error_map.ppm",
            "losses.csv",
            "metrics.csv",
            "manifest.json",
        ] {
            assert!(p.join(out).join(f).exists(), "{out}/{f}");
        }
    }
    let header = fs::read_to_string(p.join("with/metrics.csv")).unwrap();
    assert!(header.starts_with("scene_id,variant,region,abs_rel,sq_rel,rmse,rmse_log,delta1,delta2,delta3,n_pixels\n"));
    let dynamic = |out: &str| -> f64 {
        let rows = csv_rows(&p.join(out).join("metrics.csv"));
        rows.iter().find(|r| r[2] == "dynamic").unwrap()[3].parse().unwrap()
    };
    assert!(dynamic("without") > 2.0 * dynamic("with"));

    let o = domd(
        p,
        &["eval", "--scene", "scene", "--pred", "with/depth.pfm", "--out", "ev"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(csv_rows(&p.join("ev/metrics.csv")).len(), 3);
    assert!(p.join("ev/error_map.ppm").exists());
}

#[test]
fn solve_dumps_requested_cost_slices() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let o = domd(
        p,
        &["solve", "--suite", "static:0", "--dump-slices", "0,47,95", "--out", "s"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    for b in ["00", "47", "95"] {
        let img = fs::read(p.join(format!("s/cv_{b}.pgm"))).unwrap();
        assert!(img.starts_with(b"P5\n160 96\n255\n"));
    }
    let o = domd(
        p,
        &["solve", "--suite", "static:0", "--dump-slices", "96", "--out", "t"],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(!p.join("t").exists());
}

#[test]
fn ablate_emits_one_row_per_scene_variant_and_region() {
    let dir = tempfile::tempdir().unwrap();
    let o = domd(
        dir.path(),
        &[
            "ablate",
            "--count",
            "2",
            "--variants",
            "full,no_fill,no_domd",
            "--out",
            "ab",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = csv_rows(&dir.path().join("ab/ablation.csv"));
    assert_eq!(rows.len(), 18);
    let variants: std::collections::BTreeSet<&str> = rows.iter().map(|r| r[1].as_str()).collect();
    assert_eq!(variants.into_iter().collect::<Vec<_>>(), ["full", "no_domd", "no_fill"]);
    let o = domd(
        dir.path(),
        &["ablate", "--count", "1", "--variants", "bogus", "--out", "ab2"],
    );
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn gradcheck_writes_report_and_two_column_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let o = domd(
        dir.path(),
        &["gradcheck", "--suite", "static:0", "--samples", "50", "--out", "gc"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let sweep = fs::read_to_string(dir.path().join("gc/sweep.csv")).unwrap();
    let mut lines = sweep.lines();
    assert_eq!(lines.next(), Some("eps_rel,median_abs_err"));
    assert!(lines.all(|l| l.split(',').count() == 2));
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("gc/report.json")).unwrap()).unwrap();
    assert!(report["max_rel_err"].as_f64().unwrap() <= 1e-3);

    // An impossible threshold fails with exit code 2 but still leaves outputs.
    let o = domd(
        dir.path(),
        &[
            "gradcheck",
            "--suite",
            "static:0",
            "--samples",
            "50",
            "--threshold",
            "1e-15",
            "--out",
            "gc2",
        ],
    );
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(dir.path().join("gc2/manifest.json").exists());
}

#[test]
fn manifest_hashes_describe_outputs() {
    use sha2::{Digest, Sha256};
    let dir = tempfile::tempdir().unwrap();
    let o = domd(dir.path(), &["render", "--suite", "static:3", "--out", "r"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("r/manifest.json")).unwrap()).unwrap();
    let outputs = m["outputs"].as_array().unwrap();
    assert_eq!(outputs.len(), 10);
    for e in outputs {
        let bytes = fs::read(dir.path().join("r").join(e["file"].as_str().unwrap())).unwrap();
        let hex: String = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
        assert_eq!(e["sha256"].as_str().unwrap(), hex);
        assert_eq!(e["bytes"].as_u64().unwrap(), bytes.len() as u64);
    }
}
