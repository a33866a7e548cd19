//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by generation, measurement, recovery, and I/O routines.
///
/// Solver non-convergence is deliberately *not* an error: solves always
/// return their best iterate together with a `converged` flag.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("sketch index {0} received no samples")]
    EmptySketch(usize),

    #[error("target covariance has zero Frobenius norm")]
    ZeroTruth,

    #[error("materializing a {n}x{n} matrix exceeds the size cap {cap}")]
    SizeCapExceeded { n: usize, cap: usize },

    #[error("empty value list")]
    EmptyList,

    #[error("{path}: {msg}")]
    Format { path: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn format(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }
}
