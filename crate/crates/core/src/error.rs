use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("empty text cannot be embedded")]
    EmptyText,

    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("degenerate posterior: all principles have -inf log mass")]
    DegeneratePosterior,

    #[error("duplicate principle id: {0}")]
    DuplicatePrinciple(String),

    #[error("generation failure: {0}")]
    Generation(String),

    #[error("hypothesis universe exhausted")]
    Exhausted,

    #[error("world construction failed: {0}")]
    WorldConstruction(String),

    #[error("trace format error: {0}")]
    TraceFormat(String),

    #[error("replay divergence at round {round}: {message}")]
    Replay { round: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}
