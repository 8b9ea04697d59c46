//! Layer-chain model representation, the built-in architectures, and the
//! `.pkpt` checkpoint format.

mod builders;
pub mod checkpoint;
mod exec;
mod graph;
mod layer;

pub use builders::{build, build_mobilenet_v1, build_vgg16_gap, Arch, BuildOptions, ModelBuilder};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use exec::BN_MOMENTUM;
pub use graph::ModelGraph;
pub use layer::{
    ActShape, HyperParams, LayerKind, LayerSpec, BETA, BIAS, GAMMA, RUNNING_MEAN, RUNNING_VAR,
    WEIGHT,
};
