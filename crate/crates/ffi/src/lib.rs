//! C ABI over `domd_core`.
//!
//! Scenes and solve results are opaque heap handles created by
//! `domd_scene_from_*` and `domd_solve`, and released with the matching
//! `*_free`. Every fallible call returns a [`DomdStatus`]; on failure the
//! message of the most recent error on the calling thread is available from
//! [`domd_last_error`]. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use domd_core::metrics::{compute_metrics, MetricOptions};
use domd_core::scenesim::{self, make_prior, render, suite, Frame, FrameTriplet};
use domd_core::solver::{self, SolveResult, SolverConfig};
use domd_core::{geometry::DepthMap, Error};

/// Result code of every fallible call. `Ok` is zero.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomdStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// An argument was out of range, not UTF-8, or named nothing known.
    InvalidArgument = 2,
    /// A configuration file failed to parse or validate.
    Config = 3,
    /// Reading a file failed.
    Io = 4,
    /// The computation rejected its inputs (geometry, depth, empty support).
    Compute = 5,
    /// The caller's buffer is smaller than the result.
    BufferTooSmall = 6,
    /// A bug: the library panicked.
    Panic = 7,
}

/// Suite a scene is drawn from.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomdSuiteKind {
    Static = 0,
    Moving = 1,
}

/// Pixel subset a metric is evaluated on.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomdRegion {
    All = 0,
    /// Pixels of dynamic objects at time `t`.
    Dynamic = 1,
    Static = 2,
}

/// Depth metrics of a solve against the scene's ground truth.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DomdMetrics {
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rmse: f64,
    pub rmse_log: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub n_pixels: usize,
}

/// A rendered frame triplet with its depth prior and solver settings.
pub struct DomdScene {
    triplet: FrameTriplet,
    prior: DepthMap,
    solver: SolverConfig,
}

/// Output of `domd_solve`.
pub struct DomdResult {
    result: SolveResult,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> DomdStatus {
    match e {
        Error::ConfigParse { .. } | Error::SpecVersion { .. } | Error::InvalidScene(_) => DomdStatus::Config,
        Error::Io { .. } | Error::Format { .. } => DomdStatus::Io,
        Error::InvalidParameter(_) => DomdStatus::InvalidArgument,
        _ => DomdStatus::Compute,
    }
}

/// Runs `f`, recording any error or panic for [`domd_last_error`].
fn guard(f: impl FnOnce() -> Result<(), (DomdStatus, String)>) -> DomdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DomdStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            DomdStatus::Panic
        }
    }
}

fn core<T>(r: domd_core::Result<T>) -> Result<T, (DomdStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (DomdStatus, String) {
    (DomdStatus::NullPointer, format!("{what} is null"))
}

/// # Safety
/// `p` is null or a valid NUL-terminated string.
unsafe fn utf8<'a>(p: *const c_char, what: &str) -> Result<&'a str, (DomdStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (DomdStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

/// # Safety
/// `out` is valid for one pointer write.
unsafe fn emit<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn domd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null if none.
/// Valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn domd_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Renders scene `index` of a standard suite with an exact prior.
///
/// # Safety
/// `out` must be valid for writing one pointer.
#[no_mangle]
pub unsafe extern "C" fn domd_scene_from_suite(
    kind: DomdSuiteKind,
    index: usize,
    seed: u64,
    out: *mut *mut DomdScene,
) -> DomdStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let kind = match kind {
            DomdSuiteKind::Static => suite::SuiteKind::Static,
            DomdSuiteKind::Moving => suite::SuiteKind::Moving,
        };
        let spec = suite::standard_suite(kind, index + 1, seed)
            .pop()
            .expect("count is at least one");
        let triplet = core(render(&spec))?;
        let prior = triplet.depth(Frame::Current).clone();
        emit(
            out,
            DomdScene {
                triplet,
                prior,
                solver: SolverConfig::default(),
            },
        );
        Ok(())
    })
}

/// Loads and renders a scene TOML file, including its prior and any
/// `[solver]` table.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid for writing
/// one pointer.
#[no_mangle]
pub unsafe extern "C" fn domd_scene_from_config(path: *const c_char, out: *mut *mut DomdScene) -> DomdStatus {
    guard(|| {
        let path = utf8(path, "path")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let (spec, table) = core(scenesim::load_scene(Path::new(path)))?;
        let triplet = core(render(&spec))?;
        let prior = core(make_prior(
            triplet.depth(Frame::Current),
            spec.prior.mode,
            spec.prior.seed,
        ))?;
        let solver = match &table {
            Some(t) => core(SolverConfig::from_table(t))?,
            None => SolverConfig::default(),
        };
        emit(out, DomdScene { triplet, prior, solver });
        Ok(())
    })
}

/// Image size of a scene.
///
/// # Safety
/// `scene` is a live handle; `width` and `height` are valid for writes.
#[no_mangle]
pub unsafe extern "C" fn domd_scene_size(scene: *const DomdScene, width: *mut usize, height: *mut usize) -> DomdStatus {
    guard(|| {
        let s = scene.as_ref().ok_or_else(|| null("scene"))?;
        if width.is_null() || height.is_null() {
            return Err(null("width/height"));
        }
        *width = s.triplet.intrinsics.width;
        *height = s.triplet.intrinsics.height;
        Ok(())
    })
}

/// Releases a scene. Null is ignored.
///
/// # Safety
/// `scene` is null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn domd_scene_free(scene: *mut DomdScene) {
    if !scene.is_null() {
        drop(Box::from_raw(scene));
    }
}

/// Solves a scene. `variant` names a toggle set such as `"full"` or
/// `"no_domd"`; null keeps the scene's own solver settings.
///
/// # Safety
/// `scene` is a live handle; `variant` is null or NUL-terminated; `out` is
/// valid for writing one pointer.
#[no_mangle]
pub unsafe extern "C" fn domd_solve(
    scene: *const DomdScene,
    variant: *const c_char,
    out: *mut *mut DomdResult,
) -> DomdStatus {
    guard(|| {
        let s = scene.as_ref().ok_or_else(|| null("scene"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = if variant.is_null() {
            s.solver.clone()
        } else {
            core(s.solver.with_variant(utf8(variant, "variant")?))?
        };
        let result = core(solver::run(&s.triplet, &s.prior, &cfg))?;
        emit(out, DomdResult { result });
        Ok(())
    })
}

/// Copies the solved depth, row-major, into `buf`. Invalid pixels are NaN.
///
/// # Safety
/// `result` is a live handle; `buf` is valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn domd_result_depth(result: *const DomdResult, buf: *mut f64, len: usize) -> DomdStatus {
    guard(|| {
        let r = result.as_ref().ok_or_else(|| null("result"))?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let d = &r.result.depth;
        if len < d.len() {
            return Err((
                DomdStatus::BufferTooSmall,
                format!("buffer holds {len} values, depth has {}", d.len()),
            ));
        }
        let out = std::slice::from_raw_parts_mut(buf, d.len());
        for (i, o) in out.iter_mut().enumerate() {
            *o = d.get(i).unwrap_or(f64::NAN);
        }
        Ok(())
    })
}

/// Metrics of `result` against the ground truth of `scene` on `region`.
/// An empty region is a compute error.
///
/// # Safety
/// `result` and `scene` are live handles; `out` is valid for one write.
#[no_mangle]
pub unsafe extern "C" fn domd_result_metrics(
    result: *const DomdResult,
    scene: *const DomdScene,
    region: DomdRegion,
    out: *mut DomdMetrics,
) -> DomdStatus {
    guard(|| {
        let r = result.as_ref().ok_or_else(|| null("result"))?;
        let s = scene.as_ref().ok_or_else(|| null("scene"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let dynamic = s.triplet.mask(Frame::Current);
        let mask = match region {
            DomdRegion::All => None,
            DomdRegion::Dynamic => Some(dynamic.clone()),
            DomdRegion::Static => Some(dynamic.not()),
        };
        let gt = s.triplet.depth(Frame::Current);
        let m = core(compute_metrics(
            &r.result.depth,
            gt,
            mask.as_ref(),
            &MetricOptions::default(),
        ))?;
        *out = DomdMetrics {
            abs_rel: m.abs_rel,
            sq_rel: m.sq_rel,
            rmse: m.rmse,
            rmse_log: m.rmse_log,
            delta1: m.delta1,
            delta2: m.delta2,
            delta3: m.delta3,
            n_pixels: m.n_pixels,
        };
        Ok(())
    })
}

/// Releases a result. Null is ignored.
///
/// # Safety
/// `result` is null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn domd_result_free(result: *mut DomdResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_mapping() {
        assert_eq!(
            status_of(&Error::InvalidParameter("x".into())),
            DomdStatus::InvalidArgument
        );
        assert_eq!(status_of(&Error::EmptySupport("x".into())), DomdStatus::Compute);
        assert_eq!(
            status_of(&Error::SpecVersion { found: 2, supported: 1 }),
            DomdStatus::Config
        );
    }

    #[test]
    fn panics_become_status() {
        assert_eq!(guard(|| panic!("boom")), DomdStatus::Panic);
        let msg = unsafe { CStr::from_ptr(domd_last_error()) };
        assert_eq!(msg.to_str().unwrap(), "internal panic");
    }
}
