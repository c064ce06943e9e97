//! Dense f64 numerics with tape-based reverse-mode differentiation.

mod checkpoint;
mod gradcheck;
mod optim;
mod params;
mod softmax;
mod tape;
mod tensor;

use thiserror::Error;

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use gradcheck::{gradient_check, GRADCHECK_MAX_COORDS};
pub use optim::{adam_step, Adam};
pub use params::{ParamId, ParamStore};
pub use softmax::{cross_entropy, entropy, softmax, softmax_with_temperature};
pub use tape::{NodeId, Tape};
pub use tensor::Tensor;

#[derive(Debug, Error)]
pub enum NumError {
    #[error("invalid shape {0:?}: rank must be 1..=3 with positive dims")]
    BadShape(Vec<usize>),
    #[error("shape {shape:?} does not match data length {len}")]
    LengthMismatch { shape: Vec<usize>, len: usize },
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("temperature must be positive, got {0}")]
    NonPositiveTemperature(f64),
    #[error("target {target} outside [0, {n})")]
    TargetOutOfRange { target: usize, n: usize },
    #[error("tape is empty")]
    EmptyTape,
    #[error("loss node must be a scalar, has shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("operand shapes incompatible for {op}: {left:?} vs {right:?}")]
    ShapeMismatch { op: &'static str, left: Vec<usize>, right: Vec<usize> },
    #[error("unknown parameter slot {0:?}")]
    UnknownParam(String),
    #[error("duplicate parameter slot {0:?}")]
    DuplicateParam(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
