//! Minimal dense feedforward network engine.
//!
//! Sized for the tiny regression networks used elsewhere in the crate but
//! generic in shape. The forward recursion applies each layer's activation
//! to its *input*:
//!
//!   z^(0) = x,   z^(l) = phi_l(z^(l-1)) W^(l) + b^(l),   y = z^(L),
//!
//! so the output layer is affine. Training is plain MSE with SGD or Adam,
//! single-threaded and deterministic for a fixed seed.

mod network;
mod scale;
mod serialize;
mod train;

pub use network::{forward, kaiming_init, Activation, Cache, DenseLayer, Network};
pub use scale::Scaler;
pub use serialize::{load_model, save_model, SavedModel};
pub use train::{
    adam_step, backward, mse_loss, sgd_step, train, AdamState, Dataset, Gradients, Optimizer,
    TrainConfig,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("layer fan-in must be at least 1")]
    ZeroFanIn,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("cache does not match network (stale or from another net)")]
    StaleCache,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("model file error: {0}")]
    BadModelFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
