use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {layer}: expected {expected}, got {got}")]
    Dimension {
        layer: String,
        expected: usize,
        got: usize,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid group spec: {0}")]
    InvalidSpec(String),

    #[error("non-smooth locus: {0}")]
    NonSmooth(String),

    #[error("integration diverged at t = {time}")]
    Divergence { time: f64 },

    #[error("target not reached by shooting (best residual {best_residual:e})")]
    UnreachedTarget { best_residual: f64 },

    #[error("control oracle failed (best residual {best_residual:e})")]
    OracleFailure { best_residual: f64 },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("field evaluation failed: {0}")]
    Evaluation(String),

    #[error("serialization error: {0}")]
    Serde(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
