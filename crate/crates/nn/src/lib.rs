//! Minimal convolutional networks with hand-written backward passes.
//!
//! Everything here works in `f64` on channel-major (`C×H×W`) buffers. A
//! [`Network`] is a stack of `conv → ReLU` blocks, a global average pool and
//! one fully connected output layer. Parameters live in a single flat vector so
//! optimizers, checkpoints and fingerprints can treat a model as one slice.

mod arch;
mod gemm;
mod network;
mod optim;

pub use arch::{Architecture, ConvSpec};
pub use network::{Backward, Network, Trace};
pub use optim::{Optimizer, RmsProp, Sgd};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("invalid architecture: {0}")]
    Architecture(String),
    #[error("expected input of length {expected}, got {actual}")]
    InputLength { expected: usize, actual: usize },
    #[error("expected {expected} parameters, got {actual}")]
    ParamCount { expected: usize, actual: usize },
    #[error("expected {expected} output gradients, got {actual}")]
    OutputGradient { expected: usize, actual: usize },
}

pub type Result<T> = std::result::Result<T, NnError>;
