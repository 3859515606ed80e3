use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("instability detected at sub-step {substep} (max |u| = {max_abs:e})")]
    InstabilityDetected { substep: usize, max_abs: f64 },

    #[error("trajectory too short: {0}")]
    InsufficientLength(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("rollout history not initialized: {0}")]
    UninitializedHistory(String),

    #[error("non-finite gradient in parameter group {0}")]
    NonFiniteGradient(usize),

    #[error("non-finite loss at epoch {epoch}, rollout step {step} (max |u| = {max_abs:e})")]
    NonFiniteLoss {
        epoch: usize,
        step: usize,
        max_abs: f64,
    },

    #[error("series too short for spectral analysis: {len} < {min}")]
    SeriesTooShort { len: usize, min: usize },

    #[error("format error: {0}")]
    Format(String),

    #[error("truncated file: {0}")]
    TruncatedFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
