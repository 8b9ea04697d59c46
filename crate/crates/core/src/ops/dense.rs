use super::gemm::gemm;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn check(input: &Tensor, weight: &Tensor) -> Result<(usize, usize, usize)> {
    let (b, fi) = input.dims2("dense input")?;
    let (fo, wi) = weight.dims2("dense weight")?;
    if wi != fi {
        return Err(Error::shape("dense input features", weight.shape(), input.shape()));
    }
    Ok((b, fi, fo))
}

/// Affine map `y = x W^T + b` with `W` stored `(F_out, F_in)`.
pub fn dense_forward(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (b, fi, fo) = check(input, weight)?;
    if bias.shape() != [fo] {
        return Err(Error::shape("dense bias", [fo], bias.shape()));
    }
    let mut out = Tensor::zeros(&[b, fo]);
    gemm(b, fi, fo, input.data(), false, weight.data(), true, out.data_mut(), 0.0);
    if fo > 0 {
        for row in out.data_mut().chunks_mut(fo) {
            for (v, bv) in row.iter_mut().zip(bias.data()) {
                *v += bv;
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct DenseGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Tensor,
}

pub fn dense_backward(input: &Tensor, weight: &Tensor, grad_out: &Tensor) -> Result<DenseGrads> {
    let (b, fi, fo) = check(input, weight)?;
    if grad_out.shape() != [b, fo] {
        return Err(Error::shape("dense grad_out", [b, fo], grad_out.shape()));
    }
    let mut grad_input = Tensor::zeros(&[b, fi]);
    gemm(b, fo, fi, grad_out.data(), false, weight.data(), false, grad_input.data_mut(), 0.0);
    let mut grad_weight = Tensor::zeros(&[fo, fi]);
    gemm(fo, b, fi, grad_out.data(), true, input.data(), false, grad_weight.data_mut(), 0.0);
    let mut grad_bias = Tensor::zeros(&[fo]);
    if fo > 0 {
        for row in grad_out.data().chunks(fo) {
            for (g, v) in grad_bias.data_mut().iter_mut().zip(row) {
                *g += v;
            }
        }
    }
    Ok(DenseGrads {
        input: grad_input,
        weight: grad_weight,
        bias: grad_bias,
    })
}
