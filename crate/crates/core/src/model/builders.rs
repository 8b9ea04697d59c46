use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::graph::ModelGraph;
use crate::model::layer::{ActShape, LayerSpec};

/// Incremental chain builder that tracks the running activation shape so
/// each layer's input size is inferred from its predecessor.
#[derive(Debug)]
pub struct ModelBuilder {
    input_shape: [usize; 3],
    current: ActShape,
    layers: Vec<LayerSpec>,
    error: Option<Error>,
}

impl ModelBuilder {
    pub fn new(input_shape: [usize; 3]) -> Self {
        ModelBuilder {
            input_shape,
            current: ActShape::from(input_shape),
            layers: Vec::new(),
            error: None,
        }
    }

    fn channels(&mut self, id: &str) -> usize {
        match self.current {
            ActShape::Spatial { c, .. } => c,
            ActShape::Flat(_) => {
                self.fail(Error::shape(
                    format!("layer `{id}` input"),
                    "spatial activation",
                    self.current,
                ));
                0
            }
        }
    }

    fn features(&mut self, id: &str) -> usize {
        match self.current {
            ActShape::Flat(f) => f,
            ActShape::Spatial { .. } => {
                self.fail(Error::shape(
                    format!("layer `{id}` input"),
                    "flat activation",
                    self.current,
                ));
                0
            }
        }
    }

    fn fail(&mut self, err: Error) {
        if self.error.is_none() {
            self.error = Some(err);
        }
    }

    fn push(mut self, layer: LayerSpec) -> Self {
        if self.error.is_none() {
            match layer.output_shape(self.current) {
                Ok(shape) => self.current = shape,
                Err(e) => self.fail(e),
            }
        }
        self.layers.push(layer);
        self
    }

    pub fn conv(mut self, id: &str, out: usize, k: usize, stride: usize, pad: usize, bias: bool) -> Self {
        let cin = self.channels(id);
        self.push(LayerSpec::conv(id, cin, out, k, stride, pad, bias))
    }

    pub fn depthwise(mut self, id: &str, k: usize, stride: usize, pad: usize, bias: bool) -> Self {
        let c = self.channels(id);
        self.push(LayerSpec::depthwise(id, c, k, stride, pad, bias))
    }

    pub fn pointwise(mut self, id: &str, out: usize, bias: bool) -> Self {
        let cin = self.channels(id);
        self.push(LayerSpec::pointwise(id, cin, out, bias))
    }

    pub fn batchnorm(mut self, id: &str) -> Self {
        let c = self.channels(id);
        self.push(LayerSpec::batchnorm(id, c))
    }

    pub fn relu(self, id: &str) -> Self {
        self.push(LayerSpec::relu(id))
    }

    pub fn maxpool(self, id: &str) -> Self {
        self.push(LayerSpec::maxpool(id))
    }

    pub fn global_avg_pool(self, id: &str) -> Self {
        self.push(LayerSpec::global_avg_pool(id))
    }

    pub fn flatten(self, id: &str) -> Self {
        self.push(LayerSpec::flatten(id))
    }

    pub fn dense(mut self, id: &str, out: usize) -> Self {
        let fin = self.features(id);
        self.push(LayerSpec::dense(id, fin, out))
    }

    /// Marks the most recently added layer as (not) prunable.
    pub fn prunable(mut self, prunable: bool) -> Self {
        if let Some(last) = self.layers.last_mut() {
            last.prunable = prunable;
        }
        self
    }

    /// Validates the chain and initializes parameters from `seed`.
    pub fn build(self, num_classes: usize, seed: u64) -> Result<ModelGraph> {
        if let Some(err) = self.error {
            return Err(err);
        }
        let mut model = ModelGraph::new(self.input_shape, num_classes, self.layers)?;
        model.init_params(seed);
        Ok(model)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Vgg16,
    MobileNetV1,
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vgg16" => Ok(Arch::Vgg16),
            "mobilenetv1" | "mobilenet" => Ok(Arch::MobileNetV1),
            other => Err(Error::InvalidArgument(format!(
                "unknown architecture `{other}` (expected vgg16 or mobilenetv1)"
            ))),
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arch::Vgg16 => "vgg16",
            Arch::MobileNetV1 => "mobilenetv1",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BuildOptions {
    /// Channel multiplier in `(0, 1]` applied to every conv and hidden dense width.
    pub width: f64,
    /// Insert BatchNorm after every VGG conv. MobileNet always has BatchNorm.
    pub batchnorm: bool,
    pub seed: u64,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            width: 1.0,
            batchnorm: false,
            seed: 0,
        }
    }
}

impl BuildOptions {
    fn scale(&self, channels: usize) -> usize {
        ((channels as f64 * self.width).round() as usize).max(1)
    }

    fn check(&self, input_shape: [usize; 3], num_classes: usize) -> Result<()> {
        if !(self.width > 0.0 && self.width <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "width multiplier must be in (0, 1], got {}",
                self.width
            )));
        }
        if num_classes < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 classes, got {num_classes}"
            )));
        }
        if input_shape[0] != 3 {
            return Err(Error::InvalidArgument(format!(
                "built-in architectures take 3-channel input, got {:?}",
                input_shape
            )));
        }
        Ok(())
    }
}

pub fn build(arch: Arch, input_shape: [usize; 3], num_classes: usize, opts: &BuildOptions) -> Result<ModelGraph> {
    match arch {
        Arch::Vgg16 => build_vgg16_gap(input_shape, num_classes, opts),
        Arch::MobileNetV1 => build_mobilenet_v1(input_shape, num_classes, opts),
    }
}

const VGG16_PLAN: [usize; 13] = [64, 64, 128, 128, 256, 256, 256, 512, 512, 512, 512, 512, 512];
const VGG16_POOL_AFTER: [usize; 5] = [2, 4, 7, 10, 13];

/// VGG16 with the three classic FC layers replaced by global average
/// pooling and two narrow dense layers (`512 -> 512 -> classes`).
///
/// Layer ids: `conv1..conv13`, `relu1..relu13`, `pool1..pool5`, `gap`,
/// `fc1`, `relu_fc1`, `fc2` (plus `bn1..bn13` when BatchNorm is enabled).
pub fn build_vgg16_gap(input_shape: [usize; 3], num_classes: usize, opts: &BuildOptions) -> Result<ModelGraph> {
    opts.check(input_shape, num_classes)?;
    let mut b = ModelBuilder::new(input_shape);
    let mut pool = 0;
    for (i, &ch) in VGG16_PLAN.iter().enumerate() {
        let n = i + 1;
        b = b.conv(&format!("conv{n}"), opts.scale(ch), 3, 1, 1, true);
        if opts.batchnorm {
            b = b.batchnorm(&format!("bn{n}"));
        }
        b = b.relu(&format!("relu{n}"));
        if VGG16_POOL_AFTER.contains(&n) {
            pool += 1;
            b = b.maxpool(&format!("pool{pool}"));
        }
    }
    b.global_avg_pool("gap")
        .dense("fc1", opts.scale(512))
        .relu("relu_fc1")
        .dense("fc2", num_classes)
        .build(num_classes, opts.seed)
}

/// (pointwise output channels, depthwise stride) for the 13 separable blocks.
const MOBILENET_BLOCKS: [(usize, usize); 13] = [
    (64, 1),
    (128, 2),
    (128, 1),
    (256, 2),
    (256, 1),
    (512, 2),
    (512, 1),
    (512, 1),
    (512, 1),
    (512, 1),
    (512, 1),
    (1024, 2),
    (1024, 1),
];

/// MobileNetV1: a stride-2 3x3 conv to 32 channels, 13 depthwise-separable
/// blocks, global average pooling, and `1024 -> 512 -> classes` dense head.
/// Convs are bias-free and followed by BatchNorm + ReLU.
///
/// Layer ids: `conv1`/`bn1`/`relu1`, then per block `k`: `dw{k}`, `dw{k}_bn`,
/// `dw{k}_relu`, `pw{k}`, `pw{k}_bn`, `pw{k}_relu`; head `gap`, `fc1`,
/// `relu_fc1`, `fc2`. Only `conv1` and the `pw*` layers are prunable.
pub fn build_mobilenet_v1(input_shape: [usize; 3], num_classes: usize, opts: &BuildOptions) -> Result<ModelGraph> {
    opts.check(input_shape, num_classes)?;
    let mut b = ModelBuilder::new(input_shape)
        .conv("conv1", opts.scale(32), 3, 2, 1, false)
        .batchnorm("bn1")
        .relu("relu1");
    for (i, &(out, stride)) in MOBILENET_BLOCKS.iter().enumerate() {
        let n = i + 1;
        b = b
            .depthwise(&format!("dw{n}"), 3, stride, 1, false)
            .batchnorm(&format!("dw{n}_bn"))
            .relu(&format!("dw{n}_relu"))
            .pointwise(&format!("pw{n}"), opts.scale(out), false)
            .batchnorm(&format!("pw{n}_bn"))
            .relu(&format!("pw{n}_relu"));
    }
    b.global_avg_pool("gap")
        .dense("fc1", opts.scale(512))
        .relu("relu_fc1")
        .dense("fc2", num_classes)
        .build(num_classes, opts.seed)
}
