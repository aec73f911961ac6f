use std::path::PathBuf;

use thiserror::Error;

/// Everything that can go wrong inside the engine.
///
/// Variants are grouped by how the CLI reports them: input problems map to
/// exit code 1, everything else to exit code 2 (see [`Error::exit_code`]).
#[derive(Debug, Error)]
pub enum Error {
    #[error("point is behind the camera (z = {z})")]
    BehindCamera { z: f64 },

    #[error("invalid depth {depth}: must be finite and > 0")]
    InvalidDepth { depth: f64 },

    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),

    #[error("invalid rigid pose: {0}")]
    InvalidPose(String),

    #[error("invalid image buffer: {0}")]
    InvalidImage(String),

    #[error("dimension mismatch: {what} is {got_w}x{got_h}, expected {want_w}x{want_h}")]
    DimensionMismatch {
        what: &'static str,
        got_w: usize,
        got_h: usize,
        want_w: usize,
        want_h: usize,
    },

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("ray through pixel ({u}, {v}) of frame {frame} hits nothing; the background must cover the frustum")]
    RayMiss { u: usize, v: usize, frame: &'static str },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("depth prior is invalid at dynamic pixel ({x}, {y})")]
    PriorCoverage { x: usize, y: usize },

    #[error("depth must be positive at pixel {index}, got {value}")]
    NonPositiveDepth { index: usize, value: f64 },

    #[error("masks do not partition the frame: {0}")]
    MaskPartition(String),

    #[error("empty support: {0}")]
    EmptySupport(String),

    #[error("config parse error in {path}: {message}")]
    ConfigParse { path: PathBuf, message: String },

    #[error("unsupported spec_version {found} (this build reads version {supported})")]
    SpecVersion { found: u32, supported: u32 },

    #[error("malformed {format} file {path}: {message}")]
    Format {
        format: &'static str,
        path: PathBuf,
        message: String,
    },

    #[error("gradient check failed: max relative error {max_rel_err:e} exceeds {threshold:e}")]
    GradCheckFailed { max_rel_err: f64, threshold: f64 },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this error: 1 for validation, 2 for runtime.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. }
            | Error::Csv(_)
            | Error::Json(_)
            | Error::GradCheckFailed { .. }
            | Error::EmptySupport(_) => 2,
            _ => 1,
        }
    }
}
