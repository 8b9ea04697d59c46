use crate::error::{Error, Result};
use crate::model::graph::ModelGraph;
use crate::model::layer::{LayerKind, LayerSpec, BETA, GAMMA, RUNNING_MEAN, RUNNING_VAR};
use crate::ops;
use crate::tape::{GradientTape, Record};
use crate::tensor::Tensor;

/// Exponential averaging factor for BatchNorm running statistics.
pub const BN_MOMENTUM: f32 = 0.1;

impl ModelGraph {
    fn check_input(&self, input: &Tensor) -> Result<()> {
        let (_, c, h, w) = input.dims4("model input")?;
        if [c, h, w] != self.input_shape() {
            return Err(Error::shape("model input", self.input_shape(), &input.shape()[1..]));
        }
        Ok(())
    }

    /// Inference-mode forward pass (BatchNorm uses running statistics).
    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        self.check_input(input)?;
        let mut x = input.clone();
        for layer in self.layers() {
            x = eval_layer(layer, &x).map_err(|e| e.in_layer(&layer.id))?;
        }
        Ok(x)
    }

    /// Training-mode forward pass. Records every layer on `tape` and updates
    /// BatchNorm running statistics from the batch.
    pub fn forward_train(&mut self, input: &Tensor, tape: &mut GradientTape) -> Result<Tensor> {
        self.check_input(input)?;
        tape.begin();
        let mut x = input.clone();
        for layer in self.layers_mut() {
            let id = layer.id.clone();
            x = train_layer(layer, x, tape).map_err(|e| e.in_layer(&id))?;
        }
        Ok(x)
    }
}

fn eval_layer(layer: &LayerSpec, x: &Tensor) -> Result<Tensor> {
    let hp = &layer.hp;
    match layer.kind {
        LayerKind::Conv | LayerKind::PointwiseConv => {
            ops::conv2d_forward(x, layer.weight(), layer.bias(), hp.stride, hp.padding)
        }
        LayerKind::DepthwiseConv => {
            ops::depthwise_conv2d_forward(x, layer.weight(), layer.bias(), hp.stride, hp.padding)
        }
        LayerKind::Dense => ops::dense_forward(x, layer.weight(), &layer.params[crate::model::BIAS]),
        LayerKind::ReLU => Ok(ops::relu_forward(x)),
        LayerKind::MaxPool => ops::maxpool2d_forward(x).map(|(y, _)| y),
        LayerKind::GlobalAvgPool => ops::global_avg_pool_forward(x),
        LayerKind::BatchNorm => ops::batchnorm2d_forward_eval(
            x,
            &layer.params[GAMMA],
            &layer.params[BETA],
            &layer.params[RUNNING_MEAN],
            &layer.params[RUNNING_VAR],
        ),
        LayerKind::Flatten => flatten(x.clone()),
    }
}

fn flatten(x: Tensor) -> Result<Tensor> {
    let b = x.shape().first().copied().unwrap_or(0);
    let rest = x.shape()[1..].iter().product::<usize>();
    x.reshape(&[b, rest])
}

fn train_layer(layer: &mut LayerSpec, x: Tensor, tape: &mut GradientTape) -> Result<Tensor> {
    let hp = layer.hp;
    let (y, record) = match layer.kind {
        LayerKind::Conv | LayerKind::PointwiseConv => {
            let y = ops::conv2d_forward(&x, layer.weight(), layer.bias(), hp.stride, hp.padding)?;
            (y, Record::Conv { input: x })
        }
        LayerKind::DepthwiseConv => {
            let y = ops::depthwise_conv2d_forward(&x, layer.weight(), layer.bias(), hp.stride, hp.padding)?;
            (y, Record::Depthwise { input: x })
        }
        LayerKind::Dense => {
            let y = ops::dense_forward(&x, layer.weight(), &layer.params[crate::model::BIAS])?;
            (y, Record::Dense { input: x })
        }
        LayerKind::ReLU => {
            let y = ops::relu_forward(&x);
            (y.clone(), Record::Relu { output: y })
        }
        LayerKind::MaxPool => {
            let (y, argmax) = ops::maxpool2d_forward(&x)?;
            let input_shape = x.shape().to_vec();
            (y, Record::MaxPool { input_shape, argmax })
        }
        LayerKind::GlobalAvgPool => {
            let y = ops::global_avg_pool_forward(&x)?;
            (y, Record::GlobalAvgPool { input_shape: x.shape().to_vec() })
        }
        LayerKind::BatchNorm => {
            let (y, cache) = ops::batchnorm2d_forward_train(&x, &layer.params[GAMMA], &layer.params[BETA])?;
            update_running(layer.params.get_mut(RUNNING_MEAN), &cache.mean);
            update_running(layer.params.get_mut(RUNNING_VAR), &cache.var_unbiased);
            (y, Record::BatchNorm { cache })
        }
        LayerKind::Flatten => {
            let input_shape = x.shape().to_vec();
            (flatten(x)?, Record::Flatten { input_shape })
        }
    };
    tape.push(record);
    Ok(y)
}

fn update_running(stat: Option<&mut Tensor>, batch: &[f32]) {
    if let Some(stat) = stat {
        for (r, &b) in stat.data_mut().iter_mut().zip(batch) {
            *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * b;
        }
    }
}
