use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("singular or non positive-definite 2x2 block (det = {det})")]
    SingularMatrix { det: f64 },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid time {0}: must be finite and nonnegative")]
    InvalidTime(f64),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite loss at epoch {epoch}, step {step} (loss = {loss})")]
    NonFiniteLoss { epoch: usize, step: usize, loss: f64 },

    #[error("non-finite state after step {step}")]
    NonFiniteState { step: usize },

    #[error("checkpoint does not match sampler: {0}")]
    CheckpointMismatch(String),

    #[error("invalid dataset spec: {0}")]
    InvalidSpec(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error("bad magic bytes: expected {expected:?}")]
    BadMagic { expected: [u8; 4] },

    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("corrupt or truncated payload: {0}")]
    CorruptLength(String),
}
