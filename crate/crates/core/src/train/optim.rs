use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelGraph;
use crate::tensor::Tensor;

/// Step decay: `lr0 * factor^floor(epoch / period)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepDecay {
    pub lr0: f64,
    pub factor: f64,
    pub period: usize,
}

impl StepDecay {
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let decays = epoch / self.period.max(1);
        self.lr0 * self.factor.powi(decays as i32)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with per-parameter first/second moment buffers.
#[derive(Clone, Debug)]
pub struct Adam {
    params: AdamParams,
    t: u64,
    m: Vec<BTreeMap<String, Vec<f32>>>,
    v: Vec<BTreeMap<String, Vec<f32>>>,
}

impl Adam {
    pub fn new(model: &ModelGraph, params: AdamParams) -> Self {
        let zeros: Vec<BTreeMap<String, Vec<f32>>> = model
            .layers()
            .iter()
            .map(|l| {
                l.params
                    .iter()
                    .filter(|(name, _)| crate::model::LayerSpec::is_trainable(name))
                    .map(|(name, t)| (name.clone(), vec![0.0; t.numel()]))
                    .collect()
            })
            .collect();
        Adam {
            params,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// One update of every trainable parameter from `grads` (laid out as in
    /// [`crate::tape::GradientTape::grads`]).
    pub fn step(&mut self, model: &mut ModelGraph, grads: &[BTreeMap<String, Tensor>], lr: f64) -> Result<()> {
        if grads.len() != self.m.len() || model.layers().len() != self.m.len() {
            return Err(Error::InvalidArgument(
                "optimizer state does not match the model".into(),
            ));
        }
        self.t += 1;
        let AdamParams { beta1, beta2, eps } = self.params;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        let step_size = (lr * bc2.sqrt() / bc1) as f32;
        let eps_hat = (eps * bc2.sqrt()) as f32;
        let (b1, b2) = (beta1 as f32, beta2 as f32);
        for (i, layer) in model.layers_mut().iter_mut().enumerate() {
            for (name, m) in self.m[i].iter_mut() {
                let v = self.v[i].get_mut(name).expect("moment buffers share keys");
                let g = grads[i]
                    .get(name)
                    .ok_or_else(|| Error::InvalidArgument(format!("missing gradient for `{}.{name}`", layer.id)))?;
                let p = layer.params.get_mut(name).expect("trainable param");
                if g.numel() != m.len() || p.numel() != m.len() {
                    return Err(Error::shape(
                        format!("optimizer state for `{}.{name}`", layer.id),
                        m.len(),
                        g.numel(),
                    ));
                }
                for (((w, &g), m), v) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *w -= step_size * *m / (v.sqrt() + eps_hat);
                }
            }
        }
        Ok(())
    }
}
