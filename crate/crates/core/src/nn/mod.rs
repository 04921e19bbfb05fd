//! A small dense-tensor network kernel: the layers of the contact classifier
//! with hand-written backward passes, cross-entropy, Adam, and checkpoints.

mod adam;
mod checkpoint;
mod layers;
mod model;
mod tensor;

use thiserror::Error;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointError, CheckpointMeta, FORMAT_VERSION, MAGIC};
pub use layers::{
    adaptive_avg_pool, adaptive_avg_pool_backward, relu, relu_backward, softmax, softmax_cross_entropy, BatchNorm2d, BnCache,
    BnGrads, BnMode, Conv2d, ConvCache, ConvGrads, Linear, LinearGrads,
};
pub use model::{Cnn, ConvBlock, ForwardCache, Gradients, ModelSpec};
pub use tensor::{cast_slice, Real, Tensor};

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
}

pub type Result<T, E = NnError> = std::result::Result<T, E>;
