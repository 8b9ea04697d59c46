//! Reverse-mode differentiation over a recorded layer chain.
//!
//! [`ModelGraph::forward_train`] pushes one [`Record`] per layer onto a
//! [`GradientTape`]; [`GradientTape::backward`] replays them in reverse and
//! adds each parameter gradient into the tape's accumulators.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::{LayerSpec, ModelGraph, BETA, BIAS, GAMMA, WEIGHT};
use crate::ops::{self, BatchNormCache};
use crate::tensor::Tensor;

/// What one layer's forward pass left behind for its backward pass.
#[derive(Debug)]
pub(crate) enum Record {
    Conv { input: Tensor },
    Depthwise { input: Tensor },
    Dense { input: Tensor },
    Relu { output: Tensor },
    MaxPool { input_shape: Vec<usize>, argmax: Vec<u32> },
    GlobalAvgPool { input_shape: Vec<usize> },
    BatchNorm { cache: BatchNormCache },
    Flatten { input_shape: Vec<usize> },
}

#[derive(Debug)]
pub struct GradientTape {
    records: Vec<Record>,
    recording: bool,
    grads: Vec<BTreeMap<String, Tensor>>,
}

impl GradientTape {
    /// Zeroed gradient accumulators for every trainable parameter of `model`.
    pub fn new(model: &ModelGraph) -> Self {
        let grads = model
            .layers()
            .iter()
            .map(|layer| {
                layer
                    .params
                    .iter()
                    .filter(|(name, _)| LayerSpec::is_trainable(name))
                    .map(|(name, t)| (name.clone(), Tensor::zeros(t.shape())))
                    .collect()
            })
            .collect();
        GradientTape {
            records: Vec::new(),
            recording: false,
            grads,
        }
    }

    /// Zeroes all gradients and drops any recorded forward pass.
    pub fn reset(&mut self) {
        self.records.clear();
        self.recording = false;
        for layer in &mut self.grads {
            layer.values_mut().for_each(|t| t.fill(0.0));
        }
    }

    pub(crate) fn begin(&mut self) {
        self.records.clear();
        self.recording = true;
    }

    pub(crate) fn push(&mut self, record: Record) {
        self.records.push(record);
    }

    pub fn has_recorded_forward(&self) -> bool {
        self.recording
    }

    /// Accumulated gradients, one map per layer in chain order.
    pub fn grads(&self) -> &[BTreeMap<String, Tensor>] {
        &self.grads
    }

    pub fn grad(&self, model: &ModelGraph, layer_id: &str, name: &str) -> Result<&Tensor> {
        let idx = model.layer_index(layer_id)?;
        self.grads
            .get(idx)
            .and_then(|g| g.get(name))
            .ok_or_else(|| Error::InvalidArgument(format!("no gradient for `{layer_id}.{name}`")))
    }

    fn accumulate(&mut self, layer: usize, name: &str, grad: &Tensor) -> Result<()> {
        let slot = self.grads[layer]
            .get_mut(name)
            .ok_or_else(|| Error::InvalidArgument(format!("tape has no slot for param `{name}`")))?;
        slot.add_assign(grad)
    }

    /// Back-propagates `grad_output` (gradient w.r.t. the model output)
    /// through the recorded pass, accumulating parameter gradients. Returns
    /// the gradient w.r.t. the model input. Consumes the recording.
    pub fn backward(&mut self, model: &ModelGraph, grad_output: &Tensor) -> Result<Tensor> {
        if !self.recording {
            return Err(Error::NoRecordedForward);
        }
        if self.records.len() != model.layers().len() || self.grads.len() != model.layers().len() {
            return Err(Error::InvalidArgument(format!(
                "tape recorded {} layers but the model has {}",
                self.records.len(),
                model.layers().len()
            )));
        }
        self.recording = false;
        let records = std::mem::take(&mut self.records);
        let mut g = grad_output.clone();
        for (idx, record) in records.into_iter().enumerate().rev() {
            let layer = &model.layers()[idx];
            g = self.backward_layer(idx, layer, record, &g).map_err(|e| e.in_layer(&layer.id))?;
        }
        Ok(g)
    }

    fn backward_layer(&mut self, idx: usize, layer: &LayerSpec, record: Record, g: &Tensor) -> Result<Tensor> {
        let hp = &layer.hp;
        Ok(match record {
            Record::Conv { input } => {
                let gr = ops::conv2d_backward(&input, layer.weight(), hp.bias, hp.stride, hp.padding, g)?;
                self.accumulate(idx, WEIGHT, &gr.weight)?;
                if let Some(db) = &gr.bias {
                    self.accumulate(idx, BIAS, db)?;
                }
                gr.input
            }
            Record::Depthwise { input } => {
                let gr = ops::depthwise_conv2d_backward(&input, layer.weight(), hp.bias, hp.stride, hp.padding, g)?;
                self.accumulate(idx, WEIGHT, &gr.weight)?;
                if let Some(db) = &gr.bias {
                    self.accumulate(idx, BIAS, db)?;
                }
                gr.input
            }
            Record::Dense { input } => {
                let gr = ops::dense_backward(&input, layer.weight(), g)?;
                self.accumulate(idx, WEIGHT, &gr.weight)?;
                self.accumulate(idx, BIAS, &gr.bias)?;
                gr.input
            }
            Record::Relu { output } => ops::relu_backward(&output, g)?,
            Record::MaxPool { input_shape, argmax } => ops::maxpool2d_backward(&input_shape, &argmax, g)?,
            Record::GlobalAvgPool { input_shape } => ops::global_avg_pool_backward(&input_shape, g)?,
            Record::BatchNorm { cache } => {
                let gr = ops::batchnorm2d_backward(&cache, &layer.params[GAMMA], g)?;
                self.accumulate(idx, GAMMA, &gr.gamma)?;
                self.accumulate(idx, BETA, &gr.beta)?;
                gr.input
            }
            Record::Flatten { input_shape } => g.clone().reshape(&input_shape)?,
        })
    }

    /// Back-propagates a cross-entropy loss computed on the recorded output.
    pub fn backward_loss(&mut self, model: &ModelGraph, loss: &CrossEntropy) -> Result<()> {
        let grad = loss.grad()?;
        self.backward(model, &grad).map(|_| ())
    }
}

/// Mean softmax cross-entropy of a logits batch, kept for its gradient.
#[derive(Clone, Debug)]
pub struct CrossEntropy {
    pub value: f32,
    probs: Tensor,
    labels: Vec<usize>,
}

impl CrossEntropy {
    pub fn new(logits: &Tensor, labels: &[usize]) -> Result<Self> {
        let (value, probs) = ops::softmax_cross_entropy(logits, labels)?;
        Ok(CrossEntropy {
            value,
            probs,
            labels: labels.to_vec(),
        })
    }

    pub fn probs(&self) -> &Tensor {
        &self.probs
    }

    pub fn grad(&self) -> Result<Tensor> {
        ops::softmax_cross_entropy_backward(&self.probs, &self.labels)
    }

    /// Number of rows whose argmax matches the label.
    pub fn correct(&self) -> usize {
        argmax_rows(&self.probs)
            .zip(&self.labels)
            .filter(|(p, &l)| *p == l)
            .count()
    }
}

/// Row-wise argmax of a `(B, K)` tensor; first index wins on ties.
pub fn argmax_rows(t: &Tensor) -> impl Iterator<Item = usize> + '_ {
    let k = t.shape().get(1).copied().unwrap_or(1).max(1);
    t.data().chunks(k).map(|row| {
        let mut best = 0;
        for (i, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = i;
            }
        }
        best
    })
}
