use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub fn relu_forward(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    // NaN passes through so divergence reaches the loss.
    out.data_mut().iter_mut().filter(|v| **v <= 0.0).for_each(|v| *v = 0.0);
    out
}

/// Gradient through ReLU given the forward *output*.
pub fn relu_backward(output: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    if output.shape() != grad_out.shape() {
        return Err(Error::shape("relu grad_out", output.shape(), grad_out.shape()));
    }
    let mut g = grad_out.clone();
    for (gv, &y) in g.data_mut().iter_mut().zip(output.data()) {
        if y <= 0.0 {
            *gv = 0.0;
        }
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamps_negatives() {
        let x = Tensor::new(vec![3], vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu_forward(&x).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn nan_propagates() {
        let x = Tensor::new(vec![2], vec![f32::NAN, -0.0]).unwrap();
        let y = relu_forward(&x);
        assert!(y.data()[0].is_nan());
        assert_eq!(y.data()[1].to_bits(), 0.0f32.to_bits());
    }
}
