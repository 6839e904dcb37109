use thiserror::Error;

/// Errors raised by the construction, evaluation and training pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("length {0} is not a power of two")]
    NotPowerOfTwo(usize),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("invalid construction: {0}")]
    InvalidConstruction(String),

    #[error("invalid sequence: {0}")]
    InvalidSequence(String),

    #[error("illegal action {action}: subchannel already frozen or out of range")]
    IllegalAction { action: usize },

    #[error("empty candidate list")]
    EmptyList,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("no information bits to transmit (K = 0)")]
    NoInformation,

    #[error("BLER target {target} could not be bracketed in [{lo} dB, {hi} dB]")]
    Unbracketed { target: f64, lo: f64, hi: f64 },

    #[error("non-finite loss during update: {0}")]
    NonFiniteLoss(String),

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
