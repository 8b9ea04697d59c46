//! Forward and backward kernels for every layer kind the built-in networks use.
//!
//! Each op is a pure function. Backward functions take whatever the forward
//! pass needs to keep (usually the input) and return gradients with the same
//! shapes as the corresponding forward arguments.

mod activation;
mod conv;
mod dense;
mod gemm;
mod loss;
mod norm;
mod pool;

pub use activation::{relu_backward, relu_forward};
pub use conv::{
    conv2d_backward, conv2d_forward, conv_out_dim, depthwise_conv2d_backward,
    depthwise_conv2d_forward, ConvGrads,
};
pub use dense::{dense_backward, dense_forward, DenseGrads};
pub use loss::{softmax_cross_entropy, softmax_cross_entropy_backward};
pub use norm::{
    batchnorm2d_backward, batchnorm2d_forward_eval, batchnorm2d_forward_train, BatchNormCache,
    BatchNormGrads, BN_EPS,
};
pub use pool::{
    global_avg_pool_backward, global_avg_pool_forward, maxpool2d_backward, maxpool2d_forward,
};
