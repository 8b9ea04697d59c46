use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::model::layer::{ActShape, LayerKind, LayerSpec, WEIGHT};
use crate::rng::rng_for;
use crate::tensor::Tensor;

/// A single chain of layers applied to `(C, H, W)` inputs, ending in class logits.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelGraph {
    input_shape: [usize; 3],
    num_classes: usize,
    layers: Vec<LayerSpec>,
}

impl ModelGraph {
    pub fn new(input_shape: [usize; 3], num_classes: usize, layers: Vec<LayerSpec>) -> Result<Self> {
        let model = ModelGraph {
            input_shape,
            num_classes,
            layers,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.input_shape
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [LayerSpec] {
        &mut self.layers
    }

    pub fn layer_index(&self, id: &str) -> Result<usize> {
        self.layers
            .iter()
            .position(|l| l.id == id)
            .ok_or_else(|| Error::UnknownLayer(id.to_string()))
    }

    pub fn layer(&self, id: &str) -> Result<&LayerSpec> {
        Ok(&self.layers[self.layer_index(id)?])
    }

    /// Mutable view of one parameter's values. The shape cannot change.
    pub fn param_data_mut(&mut self, layer_id: &str, name: &str) -> Result<&mut [f32]> {
        let idx = self.layer_index(layer_id)?;
        self.layers[idx]
            .params
            .get_mut(name)
            .map(Tensor::data_mut)
            .ok_or_else(|| Error::InvalidArgument(format!("layer `{layer_id}` has no `{name}`")))
    }

    /// Ids of layers whose filters may be ranked and removed, in chain order.
    pub fn prunable_layers(&self) -> Vec<&str> {
        self.layers
            .iter()
            .filter(|l| l.prunable)
            .map(|l| l.id.as_str())
            .collect()
    }

    /// Output activation shape of every layer for an input of `input_shape`.
    pub fn activation_shapes(&self, input_shape: [usize; 3]) -> Result<Vec<ActShape>> {
        let mut cur = ActShape::from(input_shape);
        let mut shapes = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            cur = layer.output_shape(cur)?;
            shapes.push(cur);
        }
        Ok(shapes)
    }

    pub fn output_shape(&self) -> Result<ActShape> {
        Ok(self
            .activation_shapes(self.input_shape)?
            .last()
            .copied()
            .unwrap_or(ActShape::from(self.input_shape)))
    }

    /// Full structural check: unique ids, parameter shapes, adjacent-layer
    /// compatibility, and a `(num_classes)` output for non-empty graphs.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for layer in &self.layers {
            if !seen.insert(layer.id.as_str()) {
                return Err(Error::InvalidArgument(format!("duplicate layer id `{}`", layer.id)));
            }
            layer.check()?;
        }
        if self.input_shape.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "input shape {:?} has a zero dimension",
                self.input_shape
            )));
        }
        let out = self.output_shape()?;
        if !self.layers.is_empty() && out != ActShape::Flat(self.num_classes) {
            return Err(Error::shape(
                "model output",
                ActShape::Flat(self.num_classes),
                out,
            ));
        }
        Ok(())
    }

    /// Sum of element counts of all learned tensors (running statistics excluded).
    pub fn trainable_elements(&self) -> usize {
        self.layers
            .iter()
            .flat_map(|l| l.params.iter())
            .filter(|(name, _)| LayerSpec::is_trainable(name))
            .map(|(_, t)| t.numel())
            .sum()
    }

    /// Order-sensitive hash over ids, hyperparameters and every parameter bit.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |x: u64| {
            h ^= x;
            h = h.wrapping_mul(0x0100_0000_01b3);
        };
        for layer in &self.layers {
            layer.id.bytes().for_each(|b| eat(u64::from(b)));
            let hp = layer.hp;
            for v in [hp.kernel, hp.stride, hp.padding, hp.in_channels, hp.out_channels] {
                eat(v as u64);
            }
            for (name, t) in &layer.params {
                name.bytes().for_each(|b| eat(u64::from(b)));
                t.bits().for_each(|b| eat(u64::from(b)));
            }
        }
        h
    }

    /// Re-initializes every parameter from `seed`, one stream per layer id.
    pub fn init_params(&mut self, seed: u64) {
        for layer in &mut self.layers {
            let mut rng = rng_for(seed, &format!("init/{}", layer.id));
            layer.init_params(&mut rng);
        }
    }

    /// Swaps the final Dense layer for a freshly initialized one with
    /// `num_classes` outputs; every other layer is kept as is.
    pub fn replace_head(&mut self, num_classes: usize, seed: u64) -> Result<()> {
        if num_classes < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 classes, got {num_classes}"
            )));
        }
        let last = self
            .layers
            .last_mut()
            .filter(|l| l.kind == LayerKind::Dense)
            .ok_or_else(|| Error::InvalidArgument("model does not end in a Dense layer".into()))?;
        let mut head = LayerSpec::dense(&last.id, last.hp.in_channels, num_classes);
        let mut rng = rng_for(seed, &format!("head/{}", last.id));
        head.init_params(&mut rng);
        debug_assert!(head.params.contains_key(WEIGHT));
        *last = head;
        self.num_classes = num_classes;
        self.validate()
    }
}
