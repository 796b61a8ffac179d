//! Dense tensors and the differentiable layer primitives.
//!
//! Every layer comes as a pure forward function plus a hand-derived backward
//! function. Nothing here keeps hidden state; callers hold on to whatever the
//! backward pass needs.

mod activation;
mod batchnorm;
mod concat;
mod conv;
mod dense;
pub(crate) mod gemm;
mod pool;
mod tensor;

#[cfg(test)]
pub(crate) mod testing;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use activation::{
    relu, relu_backward, softmax, softmax_cross_entropy, softmax_cross_entropy_backward,
    CrossEntropy,
};
pub use batchnorm::{
    batch_norm, batch_norm_backward, update_running_stats, BatchNormCache, BatchNormConfig,
    BatchNormGradients,
};
pub use concat::{concat_channels, concat_channels_backward};
pub use conv::{
    conv2d, conv2d_backward, conv2d_backward_with, ConvGeometry, ConvGradients, ConvOutput, Padding,
};
pub use dense::{dense, dense_backward, DenseGradients};
pub use pool::{global_avg_pool, global_avg_pool_backward};
pub use tensor::{GradientPair, Precision, Scalar, Tensor};

/// Whether batch statistics (train) or running statistics (infer) are used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("{op}: shape mismatch: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("{op}: non-finite value encountered")]
    NonFinite { op: &'static str },
    #[error("{op}: empty spatial extent")]
    EmptyExtent { op: &'static str },
    #[error("{op}: empty batch")]
    EmptyBatch { op: &'static str },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("invalid convolution geometry: {0}")]
    InvalidGeometry(String),
}
