//! Dense tensors, reverse-mode differentiation, initialisation and Adam.

mod adam;
pub mod checkpoint;
mod init;
mod params;
mod scalar;
mod tape;
mod tensor;

pub use adam::Adam;
pub use init::{derive_seed, xavier_uniform, xavier_uniform_with};
pub use params::ParamStore;
pub use scalar::Scalar;
pub use tape::{SparseRows, Tape, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("loss is not connected to any trainable leaf")]
    DisconnectedLoss,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
