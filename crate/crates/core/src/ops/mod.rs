//! Forward and backward kernels for every layer primitive.

pub mod basic;
pub mod conv;
pub mod dense;
pub(crate) mod gemm;
pub mod norm;
pub mod pool;

pub use basic::{CE_EPSILON, add_all, concat_channels, cross_entropy, relu, softmax};
pub use conv::{conv2d_forward, depthwise_conv2d_forward, output_extent};
pub use dense::dense_forward;
pub use norm::{BN_EPSILON, BN_MOMENTUM, BatchStats};
pub use pool::PoolKind;
