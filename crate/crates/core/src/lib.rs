//! Structured filter pruning for small convolutional networks.
//!
//! The crate bundles everything needed to train a VGG16-style or MobileNetV1
//! classifier on CPU, rank its convolution filters by L1 norm, remove the
//! weakest ones together with every tensor slice that depended on them, and
//! meter the result in parameters, FLOPs and bytes.
//!
//! Module map:
//!
//! - [`tensor`], [`ops`], [`tape`]: dense f32 tensors, forward/backward kernels
//!   and the per-chain gradient tape.
//! - [`model`]: layer graph, the two built-in architectures, `.pkpt` checkpoints.
//! - [`meter`]: exact parameter / FLOP / size accounting.
//! - [`prune`]: filter norm profiles, plan resolution and graph surgery.
//! - [`sensitivity`]: per-layer pruning sweeps and norm reports.
//! - [`train`]: Adam with step decay, prune/retrain sessions, the
//!   fine-tuned vs from-scratch comparison harness.
//! - [`data`]: IDX, CIFAR-10 binary and raw tensor dataset loaders.

mod container;
pub mod data;
pub mod error;
pub mod meter;
pub mod model;
pub mod ops;
pub mod prune;
pub mod rng;
pub mod sensitivity;
pub mod tape;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;
