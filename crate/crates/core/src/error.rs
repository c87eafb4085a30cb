use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("pathology name is empty")]
    EmptyName,

    #[error("duplicate pathology `{0}` in taxonomy")]
    DuplicatePathology(String),

    #[error("duplicate pathology `{0}` in relabel target")]
    DuplicateTarget(String),

    #[error("failed to parse metadata csv {path}: {message}")]
    CsvParse { path: PathBuf, message: String },

    #[error("adapter profile error: {0}")]
    Profile(String),

    #[error("dataset `{0}` has no usable rows")]
    EmptyDataset(String),

    #[error("failed to decode image {path}: {message}")]
    Decode { path: PathBuf, message: String },

    #[error("image {path} is {actual}-bit but the profile declares {expected}-bit")]
    BitDepthMismatch { path: PathBuf, expected: u8, actual: u8 },

    #[error("index {index} out of range for dataset of {len} samples")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch { expected: (usize, usize), actual: (usize, usize) },

    #[error(
        "pathology lists differ between `{first}` and `{other}`; relabel all datasets to a common taxonomy before merging"
    )]
    PathologyMismatch { first: String, other: String },

    #[error("dataset `{0}` has no view column")]
    NoViewColumn(String),

    #[error("dataset `{0}` has no patientid column")]
    NoPatientIdColumn(String),

    #[error("box ({x}, {y}, {w}, {h}) lies entirely outside a {height}x{width} image")]
    DegenerateBox { x: i64, y: i64, w: i64, h: i64, height: usize, width: usize },

    #[error("masks requested but dataset `{0}` declares no mask source")]
    NoMaskSource(String),

    #[error("covariate pool is infeasible: {0}")]
    InfeasiblePool(String),

    #[error("class `{0}` has no samples")]
    EmptyClass(String),

    #[error("scored set needs at least one positive and one negative label")]
    SingleClass,

    #[error("value outside the function domain: {0}")]
    Domain(String),

    #[error("length mismatch: {left} names vs {right} values")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid transform: {0}")]
    InvalidTransform(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { context: context.into(), source }
    }

    /// Errors that stem from bad user input rather than bad data.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::InvalidArgument(_) | Error::InvalidTransform(_) | Error::DuplicateTarget(_))
    }
}
