use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("out of bounds: {0}")]
    OutOfBounds(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no evidence: {0}")]
    NoEvidence(String),

    #[error("conditioning location has zero mass")]
    ZeroMassCondition,

    #[error("problem too large: {0}")]
    TooLarge(String),

    #[error("stage {stage} infeasible: {reason}")]
    StageFailed { stage: usize, reason: String },

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
