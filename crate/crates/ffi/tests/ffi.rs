use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use domd_ffi::*;

fn last_error() -> String {
    let p = domd_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn suite_scene(kind: DomdSuiteKind, index: usize) -> *mut DomdScene {
    let mut scene = ptr::null_mut();
    assert_eq!(
        unsafe { domd_scene_from_suite(kind, index, 0, &mut scene) },
        DomdStatus::Ok
    );
    assert!(!scene.is_null());
    scene
}

fn solve(scene: *const DomdScene, variant: Option<&str>) -> *mut DomdResult {
    let v = variant.map(|v| CString::new(v).unwrap());
    let mut result = ptr::null_mut();
    let st = unsafe { domd_solve(scene, v.as_ref().map_or(ptr::null(), |c| c.as_ptr()), &mut result) };
    assert_eq!(st, DomdStatus::Ok);
    result
}

fn metrics(result: *const DomdResult, scene: *const DomdScene, region: DomdRegion) -> DomdMetrics {
    let mut m = DomdMetrics::default();
    assert_eq!(
        unsafe { domd_result_metrics(result, scene, region, &mut m) },
        DomdStatus::Ok
    );
    m
}

#[test]
fn suite_round_trip() {
    let scene = suite_scene(DomdSuiteKind::Moving, 0);
    let (mut w, mut h) = (0, 0);
    assert_eq!(unsafe { domd_scene_size(scene, &mut w, &mut h) }, DomdStatus::Ok);
    assert_eq!((w, h), (160, 96));

    let with = solve(scene, None);
    let without = solve(scene, Some("no_domd"));
    let a = metrics(with, scene, DomdRegion::Dynamic);
    let b = metrics(without, scene, DomdRegion::Dynamic);
    assert!(a.n_pixels > 0 && a.n_pixels == b.n_pixels);
    assert!(b.abs_rel > 2.0 * a.abs_rel, "{} vs {}", b.abs_rel, a.abs_rel);

    let mut depth = vec![0.0; w * h];
    assert_eq!(
        unsafe { domd_result_depth(with, depth.as_mut_ptr(), depth.len()) },
        DomdStatus::Ok
    );
    assert!(depth.iter().filter(|d| d.is_finite()).all(|&d| d > 0.0));
    assert_eq!(
        unsafe { domd_result_depth(with, depth.as_mut_ptr(), depth.len() - 1) },
        DomdStatus::BufferTooSmall
    );
    assert!(last_error().contains("buffer"));

    unsafe {
        domd_result_free(with);
        domd_result_free(without);
        domd_scene_free(scene);
    }
}

#[test]
fn static_scene_has_no_dynamic_region() {
    let scene = suite_scene(DomdSuiteKind::Static, 2);
    let r = solve(scene, Some("full"));
    assert!(metrics(r, scene, DomdRegion::All).abs_rel < 0.05);
    let mut m = DomdMetrics::default();
    assert_eq!(
        unsafe { domd_result_metrics(r, scene, DomdRegion::Dynamic, &mut m) },
        DomdStatus::Compute
    );
    unsafe {
        domd_result_free(r);
        domd_scene_free(scene);
    }
}

#[test]
fn errors_are_codes_not_crashes() {
    let mut scene = ptr::null_mut();
    assert_eq!(
        unsafe { domd_scene_from_config(ptr::null(), &mut scene) },
        DomdStatus::NullPointer
    );
    let missing = CString::new("/nonexistent/scene.toml").unwrap();
    assert_eq!(
        unsafe { domd_scene_from_config(missing.as_ptr(), &mut scene) },
        DomdStatus::Io
    );
    assert!(scene.is_null());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scene.toml");
    std::fs::write(&path, "spec_version = 1\n[camera]\nfx = 50.0\n").unwrap();
    let c = CString::new(path.to_str().unwrap()).unwrap();
    assert_eq!(
        unsafe { domd_scene_from_config(c.as_ptr(), &mut scene) },
        DomdStatus::Config
    );
    assert!(last_error().contains("fy"), "{}", last_error());

    let s = suite_scene(DomdSuiteKind::Static, 0);
    let bogus = CString::new("no_such_variant").unwrap();
    let mut r = ptr::null_mut();
    assert_eq!(
        unsafe { domd_solve(s, bogus.as_ptr(), &mut r) },
        DomdStatus::InvalidArgument
    );
    assert_eq!(
        unsafe { domd_solve(ptr::null(), ptr::null(), &mut r) },
        DomdStatus::NullPointer
    );
    assert!(r.is_null());
    unsafe {
        domd_scene_free(s);
        domd_scene_free(ptr::null_mut());
        domd_result_free(ptr::null_mut());
    }
}

#[test]
fn config_scene_carries_solver_table() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scene.toml");
    std::fs::write(
        &path,
        "spec_version = 1\n[camera]\nfx = 60.0\nfy = 60.0\ncx = 23.5\ncy = 15.5\nwidth = 48\nheight = 32\n\
         [camera.prev]\nposition = [-0.3, 0.0, 0.0]\n\
         [[plane]]\ndepth = 6.0\ntexture = { seed = 4, cell = 4.0 }\n\
         [solver]\nuse_domd = false\n",
    )
    .unwrap();
    let c = CString::new(path.to_str().unwrap()).unwrap();
    let mut scene = ptr::null_mut();
    assert_eq!(
        unsafe { domd_scene_from_config(c.as_ptr(), &mut scene) },
        DomdStatus::Ok
    );
    let r = solve(scene, None);
    assert!(metrics(r, scene, DomdRegion::All).n_pixels > 0);
    unsafe {
        domd_result_free(r);
        domd_scene_free(scene);
    }
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(domd_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export_and_compiles() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/domd.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for f in [
        "domd_version",
        "domd_last_error",
        "domd_scene_from_suite",
        "domd_scene_from_config",
        "domd_scene_size",
        "domd_scene_free",
        "domd_solve",
        "domd_result_depth",
        "domd_result_metrics",
        "domd_result_free",
    ] {
        assert!(text.contains(&format!("{f}(")), "{f} missing from header");
    }
    assert!(text.contains("typedef struct DomdScene DomdScene;"));

    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"domd.h\"\nint main(void) {\n  DomdScene *s = 0;\n  \
         DomdStatus st = domd_scene_from_suite(DOMD_SUITE_KIND_STATIC, 0, 0, &s);\n  \
         domd_scene_free(s);\n  return st == DOMD_STATUS_OK ? 0 : 1;\n}\n",
    )
    .unwrap();
    match Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(header.parent().unwrap())
        .arg(&src)
        .output()
    {
        Ok(o) => assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr)),
        Err(e) => eprintln!("no C compiler ({cc}: {e}); syntax check not run"),
    }
}
