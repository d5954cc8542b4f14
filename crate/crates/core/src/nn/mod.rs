//! Minimal tensor engine and the MiniDense classifier.
//!
//! Layers are plain functions with explicit forward and backward rules; the
//! model wires them in a fixed order and caches the activations the backward
//! pass needs, so gradients are deterministic. All reductions accumulate in
//! `f64` regardless of the element type; training runs on `f32` tensors and
//! gradient checking instantiates the same code with `f64`.

mod checkpoint;
mod gradcheck;
mod model;
mod ops;
mod scalar;
mod tensor;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use gradcheck::grad_check;
pub use model::{ForwardCache, InputNorm, MiniDense, ModelConfig};
pub use ops::{
    avg_pool2d, avg_pool2d_backward, concat_channels, concat_channels_backward, conv2d,
    conv2d_backward, global_avg_pool, global_avg_pool_backward, linear, linear_backward, relu,
    relu_backward, softmax, softmax_cross_entropy, Padding,
};
pub use scalar::Scalar;
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error("gradient buffer missing for {0}")]
    MissingGrad(String),
    #[error("non-finite value encountered in {0}")]
    NonFinite(String),
    #[error("finite-difference step must be nonzero")]
    ZeroEps,
    #[error("malformed checkpoint: {0}")]
    BadCheckpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
