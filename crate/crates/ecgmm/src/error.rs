//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by parsers, model training, inference and evaluation.
#[derive(Error, Debug)]
pub enum Error {
    /// Malformed input file (missing file, bad line, ragged rows).
    #[error("format error: {0}")]
    Format(String),
    /// Structurally inconsistent data (e.g. vertex id out of range).
    #[error("integrity error: {0}")]
    Integrity(String),
    /// Invalid numeric value in input data (NaN, infinity).
    #[error("value error: {0}")]
    Value(String),
    /// Array dimensions do not match the expected shapes.
    #[error("shape error: {0}")]
    Shape(String),
    /// Inconsistent or invalid configuration.
    #[error("config error: {0}")]
    Config(String),
    /// Operation called in a state it does not support (e.g. empty statistics).
    #[error("state error: {0}")]
    State(String),
    /// Non-finite intermediate value during model computation.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// Random sampling failed within the retry budget.
    #[error("sampling error: {0}")]
    Sampling(String),
    /// Predictor training diverged.
    #[error("training error: {0}")]
    Training(String),
    /// Requested feature combination is not supported.
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Whether this error is a usage problem (bad invocation or configuration)
    /// rather than a runtime failure. The CLI maps usage errors to exit code 2.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}
