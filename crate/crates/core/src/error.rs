use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Error, Debug)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("dimension mismatch: expected {expected_w}x{expected_h}, got {actual_w}x{actual_h}")]
    DimensionMismatch {
        expected_w: usize,
        expected_h: usize,
        actual_w: usize,
        actual_h: usize,
    },
    #[error("empty region: {0}")]
    EmptyRegion(String),
    #[error("degenerate configuration: {0}")]
    Degenerate(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("insufficient correspondences: {found} common confident joints, need at least {needed}")]
    InsufficientCorrespondence { found: usize, needed: usize },
    #[error("unknown parsing label {0}")]
    UnknownLabel(u8),
    #[error("nothing to repair: no artifact reports")]
    NothingToRepair,
    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("malformed sidecar {}: {reason}", .path.display())]
    MalformedSidecar { path: PathBuf, reason: String },
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Backend(#[from] crate::orchestrator::BackendError),
    #[error("image codec error: {0}")]
    Image(#[from] image::ImageError),
    #[error("png decode error: {0}")]
    PngDecode(#[from] png::DecodingError),
    #[error("png encode error: {0}")]
    PngEncode(#[from] png::EncodingError),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn dims(expected: (usize, usize), actual: (usize, usize)) -> Self {
        Error::DimensionMismatch {
            expected_w: expected.0,
            expected_h: expected.1,
            actual_w: actual.0,
            actual_h: actual.1,
        }
    }

    pub(crate) fn sidecar(path: impl Into<PathBuf>, reason: impl ToString) -> Self {
        Error::MalformedSidecar {
            path: path.into(),
            reason: reason.to_string(),
        }
    }
}
