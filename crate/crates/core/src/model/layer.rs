use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ops::conv_out_dim;
use crate::tensor::Tensor;

pub const WEIGHT: &str = "weight";
pub const BIAS: &str = "bias";
pub const GAMMA: &str = "gamma";
pub const BETA: &str = "beta";
pub const RUNNING_MEAN: &str = "running_mean";
pub const RUNNING_VAR: &str = "running_var";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LayerKind {
    Conv,
    DepthwiseConv,
    PointwiseConv,
    Dense,
    ReLU,
    MaxPool,
    GlobalAvgPool,
    BatchNorm,
    Flatten,
}

impl LayerKind {
    /// Conv kinds whose filters can be ranked and removed.
    pub fn is_filter_conv(self) -> bool {
        matches!(self, LayerKind::Conv | LayerKind::PointwiseConv)
    }

    pub fn has_params(self) -> bool {
        matches!(
            self,
            LayerKind::Conv
                | LayerKind::DepthwiseConv
                | LayerKind::PointwiseConv
                | LayerKind::Dense
                | LayerKind::BatchNorm
        )
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Per-kind hyperparameters. Fields that do not apply to a kind are zero.
///
/// For `DepthwiseConv` and `BatchNorm`, `in_channels == out_channels`.
/// For `Dense`, the channel fields hold feature counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HyperParams {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub bias: bool,
}

/// Shape of the activation flowing between two layers (batch axis omitted).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActShape {
    Spatial { c: usize, h: usize, w: usize },
    Flat(usize),
}

impl ActShape {
    pub fn dims(&self) -> Vec<usize> {
        match *self {
            ActShape::Spatial { c, h, w } => vec![c, h, w],
            ActShape::Flat(f) => vec![f],
        }
    }

    pub fn numel(&self) -> usize {
        self.dims().iter().product()
    }
}

impl From<[usize; 3]> for ActShape {
    fn from([c, h, w]: [usize; 3]) -> Self {
        ActShape::Spatial { c, h, w }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerSpec {
    pub id: String,
    pub kind: LayerKind,
    pub hp: HyperParams,
    pub params: BTreeMap<String, Tensor>,
    pub prunable: bool,
}

impl LayerSpec {
    fn with_hp(id: &str, kind: LayerKind, hp: HyperParams, prunable: bool) -> Self {
        let mut layer = LayerSpec {
            id: id.to_string(),
            kind,
            hp,
            params: BTreeMap::new(),
            prunable,
        };
        for (name, shape) in layer.expected_param_shapes() {
            let fill = if name == GAMMA || name == RUNNING_VAR { 1.0 } else { 0.0 };
            layer.params.insert(name.to_string(), Tensor::full(&shape, fill));
        }
        layer
    }

    pub fn conv(id: &str, cin: usize, cout: usize, k: usize, stride: usize, pad: usize, bias: bool) -> Self {
        let hp = HyperParams {
            kernel: k,
            stride,
            padding: pad,
            in_channels: cin,
            out_channels: cout,
            bias,
        };
        Self::with_hp(id, LayerKind::Conv, hp, true)
    }

    pub fn depthwise(id: &str, channels: usize, k: usize, stride: usize, pad: usize, bias: bool) -> Self {
        let hp = HyperParams {
            kernel: k,
            stride,
            padding: pad,
            in_channels: channels,
            out_channels: channels,
            bias,
        };
        Self::with_hp(id, LayerKind::DepthwiseConv, hp, false)
    }

    pub fn pointwise(id: &str, cin: usize, cout: usize, bias: bool) -> Self {
        let hp = HyperParams {
            kernel: 1,
            stride: 1,
            padding: 0,
            in_channels: cin,
            out_channels: cout,
            bias,
        };
        Self::with_hp(id, LayerKind::PointwiseConv, hp, true)
    }

    pub fn dense(id: &str, fin: usize, fout: usize) -> Self {
        let hp = HyperParams {
            in_channels: fin,
            out_channels: fout,
            bias: true,
            ..Default::default()
        };
        Self::with_hp(id, LayerKind::Dense, hp, false)
    }

    pub fn batchnorm(id: &str, channels: usize) -> Self {
        let hp = HyperParams {
            in_channels: channels,
            out_channels: channels,
            ..Default::default()
        };
        Self::with_hp(id, LayerKind::BatchNorm, hp, false)
    }

    pub fn relu(id: &str) -> Self {
        Self::with_hp(id, LayerKind::ReLU, HyperParams::default(), false)
    }

    pub fn maxpool(id: &str) -> Self {
        let hp = HyperParams {
            kernel: 2,
            stride: 2,
            ..Default::default()
        };
        Self::with_hp(id, LayerKind::MaxPool, hp, false)
    }

    pub fn global_avg_pool(id: &str) -> Self {
        Self::with_hp(id, LayerKind::GlobalAvgPool, HyperParams::default(), false)
    }

    pub fn flatten(id: &str) -> Self {
        Self::with_hp(id, LayerKind::Flatten, HyperParams::default(), false)
    }

    /// Parameter names and shapes implied by `kind` and `hp`, in storage order.
    pub fn expected_param_shapes(&self) -> Vec<(&'static str, Vec<usize>)> {
        let HyperParams {
            kernel: k,
            in_channels: cin,
            out_channels: cout,
            bias,
            ..
        } = self.hp;
        let mut shapes = Vec::new();
        match self.kind {
            LayerKind::Conv | LayerKind::PointwiseConv => {
                shapes.push((WEIGHT, vec![cout, cin, k, k]));
                if bias {
                    shapes.push((BIAS, vec![cout]));
                }
            }
            LayerKind::DepthwiseConv => {
                shapes.push((WEIGHT, vec![cout, 1, k, k]));
                if bias {
                    shapes.push((BIAS, vec![cout]));
                }
            }
            LayerKind::Dense => {
                shapes.push((WEIGHT, vec![cout, cin]));
                shapes.push((BIAS, vec![cout]));
            }
            LayerKind::BatchNorm => {
                for name in [GAMMA, BETA, RUNNING_MEAN, RUNNING_VAR] {
                    shapes.push((name, vec![cout]));
                }
            }
            _ => {}
        }
        shapes.sort_by_key(|(name, _)| *name);
        shapes
    }

    /// Checks hyperparameter consistency and that `params` holds exactly the
    /// implied tensors.
    pub fn check(&self) -> Result<()> {
        let hp = &self.hp;
        let bad = |msg: &str| {
            Err(Error::InvalidArgument(format!(
                "layer `{}` ({}): {msg}",
                self.id, self.kind
            )))
        };
        match self.kind {
            LayerKind::Conv | LayerKind::DepthwiseConv if hp.kernel == 0 || hp.stride == 0 => {
                return bad("kernel and stride must be >= 1");
            }
            LayerKind::PointwiseConv if hp.kernel != 1 || hp.stride != 1 || hp.padding != 0 => {
                return bad("pointwise conv must have k=1, stride=1, padding=0");
            }
            LayerKind::MaxPool if hp.kernel != 2 || hp.stride != 2 => {
                return bad("max pooling is fixed at 2x2, stride 2");
            }
            _ => {}
        }
        if matches!(self.kind, LayerKind::DepthwiseConv | LayerKind::BatchNorm)
            && hp.in_channels != hp.out_channels
        {
            return bad("channel count must be preserved");
        }
        if self.prunable && !self.kind.is_filter_conv() {
            return bad("only Conv and PointwiseConv layers can be prunable");
        }
        let expected = self.expected_param_shapes();
        if expected.len() != self.params.len() {
            return Err(Error::shape(
                format!("layer `{}` parameter set", self.id),
                expected.iter().map(|(n, _)| *n).collect::<Vec<_>>(),
                self.params.keys().collect::<Vec<_>>(),
            ));
        }
        for (name, shape) in expected {
            match self.params.get(name) {
                Some(t) if t.shape() == shape.as_slice() => {}
                Some(t) => {
                    return Err(Error::shape(
                        format!("layer `{}` param `{name}`", self.id),
                        shape,
                        t.shape(),
                    ))
                }
                None => {
                    return Err(Error::shape(
                        format!("layer `{}` param `{name}`", self.id),
                        shape,
                        "missing",
                    ))
                }
            }
        }
        Ok(())
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name)
    }

    pub fn weight(&self) -> &Tensor {
        &self.params[WEIGHT]
    }

    pub fn bias(&self) -> Option<&Tensor> {
        self.params.get(BIAS)
    }

    /// Running statistics are state, not learned parameters.
    pub fn is_trainable(name: &str) -> bool {
        name != RUNNING_MEAN && name != RUNNING_VAR
    }

    /// Number of filters (output channels) of a conv kind.
    pub fn filters(&self) -> usize {
        self.hp.out_channels
    }

    /// Kaiming-uniform fan-in init for conv and dense weights, zero biases.
    /// BatchNorm layers are reset to identity.
    pub fn init_params<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let fan_in = match self.kind {
            LayerKind::Conv | LayerKind::PointwiseConv => {
                self.hp.in_channels * self.hp.kernel * self.hp.kernel
            }
            LayerKind::DepthwiseConv => self.hp.kernel * self.hp.kernel,
            LayerKind::Dense => self.hp.in_channels,
            _ => 0,
        };
        for (name, t) in self.params.iter_mut() {
            match name.as_str() {
                WEIGHT => {
                    let bound = if fan_in > 0 { (6.0 / fan_in as f32).sqrt() } else { 0.0 };
                    *t = Tensor::uniform(t.shape(), -bound, bound, rng);
                }
                GAMMA | RUNNING_VAR => t.fill(1.0),
                _ => t.fill(0.0),
            }
        }
    }

    /// Output activation shape for `input`, or a shape error naming this layer.
    pub fn output_shape(&self, input: ActShape) -> Result<ActShape> {
        let hp = &self.hp;
        let mismatch = |expected: String| {
            Err(Error::shape(
                format!("layer `{}` ({}) input", self.id, self.kind),
                expected,
                input,
            ))
        };
        match (self.kind, input) {
            (
                LayerKind::Conv | LayerKind::PointwiseConv | LayerKind::DepthwiseConv,
                ActShape::Spatial { c, h, w },
            ) => {
                if c != hp.in_channels {
                    return mismatch(format!("{} channels", hp.in_channels));
                }
                match (
                    conv_out_dim(h, hp.kernel, hp.stride, hp.padding),
                    conv_out_dim(w, hp.kernel, hp.stride, hp.padding),
                ) {
                    (Some(oh), Some(ow)) if oh > 0 && ow > 0 => Ok(ActShape::Spatial {
                        c: hp.out_channels,
                        h: oh,
                        w: ow,
                    }),
                    _ => mismatch(format!("spatial size >= kernel {}", hp.kernel)),
                }
            }
            (LayerKind::BatchNorm, ActShape::Spatial { c, .. }) => {
                if c != hp.in_channels {
                    return mismatch(format!("{} channels", hp.in_channels));
                }
                Ok(input)
            }
            (LayerKind::ReLU, _) => Ok(input),
            (LayerKind::MaxPool, ActShape::Spatial { c, h, w }) => {
                if h < 2 || w < 2 {
                    return mismatch("spatial size >= 2".into());
                }
                Ok(ActShape::Spatial { c, h: h / 2, w: w / 2 })
            }
            (LayerKind::GlobalAvgPool, ActShape::Spatial { c, .. }) => Ok(ActShape::Flat(c)),
            (LayerKind::Flatten, ActShape::Spatial { c, h, w }) => Ok(ActShape::Flat(c * h * w)),
            (LayerKind::Flatten, ActShape::Flat(_)) => Ok(input),
            (LayerKind::Dense, ActShape::Flat(f)) => {
                if f != hp.in_channels {
                    return mismatch(format!("{} features", hp.in_channels));
                }
                Ok(ActShape::Flat(hp.out_channels))
            }
            (LayerKind::Dense, _) => mismatch(format!("{} flat features", hp.in_channels)),
            _ => mismatch("a spatial (C, H, W) activation".into()),
        }
    }
}
