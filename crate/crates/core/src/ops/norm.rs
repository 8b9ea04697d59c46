use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const BN_EPS: f32 = 1e-5;

/// Values the backward pass needs from a training-mode batch norm.
#[derive(Clone, Debug)]
pub struct BatchNormCache {
    pub normalized: Tensor,
    pub inv_std: Vec<f32>,
    pub mean: Vec<f32>,
    /// Unbiased batch variance, for running-statistics updates.
    pub var_unbiased: Vec<f32>,
}

#[derive(Clone, Debug)]
pub struct BatchNormGrads {
    pub input: Tensor,
    pub gamma: Tensor,
    pub beta: Tensor,
}

fn check(input: &Tensor, gamma: &Tensor, beta: &Tensor) -> Result<(usize, usize, usize)> {
    let (b, c, h, w) = input.dims4("batchnorm2d input")?;
    if gamma.shape() != [c] || beta.shape() != [c] {
        return Err(Error::shape("batchnorm2d affine params", [c], gamma.shape()));
    }
    Ok((b, c, h * w))
}

/// Normalizes with batch statistics over `(B, H, W)` per channel.
pub fn batchnorm2d_forward_train(
    input: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
) -> Result<(Tensor, BatchNormCache)> {
    let (b, c, area) = check(input, gamma, beta)?;
    let n = b * area;
    let x = input.data();
    let mut mean = vec![0.0f32; c];
    let mut var = vec![0.0f32; c];
    let mut var_unbiased = vec![0.0f32; c];
    for ch in 0..c {
        let planes = (0..b).map(|s| &x[(s * c + ch) * area..(s * c + ch + 1) * area]);
        let sum: f64 = planes.clone().flatten().map(|&v| f64::from(v)).sum();
        let mu = if n > 0 { sum / n as f64 } else { 0.0 };
        let sq: f64 = planes.flatten().map(|&v| (f64::from(v) - mu).powi(2)).sum();
        mean[ch] = mu as f32;
        var[ch] = if n > 0 { (sq / n as f64) as f32 } else { 0.0 };
        var_unbiased[ch] = if n > 1 { (sq / (n - 1) as f64) as f32 } else { var[ch] };
    }
    let inv_std: Vec<f32> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
    let mut normalized = input.clone();
    let mut out = input.clone();
    for (i, (nv, ov)) in normalized
        .data_mut()
        .iter_mut()
        .zip(out.data_mut().iter_mut())
        .enumerate()
    {
        let ch = (i / area) % c;
        let xh = (*nv - mean[ch]) * inv_std[ch];
        *nv = xh;
        *ov = gamma.data()[ch] * xh + beta.data()[ch];
    }
    Ok((
        out,
        BatchNormCache {
            normalized,
            inv_std,
            mean,
            var_unbiased,
        },
    ))
}

/// Normalizes with running statistics.
pub fn batchnorm2d_forward_eval(
    input: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    running_mean: &Tensor,
    running_var: &Tensor,
) -> Result<Tensor> {
    let (_, c, area) = check(input, gamma, beta)?;
    if running_mean.shape() != [c] || running_var.shape() != [c] {
        return Err(Error::shape("batchnorm2d running stats", [c], running_mean.shape()));
    }
    let scale: Vec<f32> = (0..c)
        .map(|ch| gamma.data()[ch] / (running_var.data()[ch] + BN_EPS).sqrt())
        .collect();
    let shift: Vec<f32> = (0..c)
        .map(|ch| beta.data()[ch] - running_mean.data()[ch] * scale[ch])
        .collect();
    let mut out = input.clone();
    if area > 0 {
        for (p, plane) in out.data_mut().chunks_mut(area).enumerate() {
            let ch = p % c;
            plane.iter_mut().for_each(|v| *v = *v * scale[ch] + shift[ch]);
        }
    }
    Ok(out)
}

pub fn batchnorm2d_backward(
    cache: &BatchNormCache,
    gamma: &Tensor,
    grad_out: &Tensor,
) -> Result<BatchNormGrads> {
    let xhat = &cache.normalized;
    if grad_out.shape() != xhat.shape() {
        return Err(Error::shape("batchnorm2d grad_out", xhat.shape(), grad_out.shape()));
    }
    let (b, c, h, w) = xhat.dims4("batchnorm2d cache")?;
    let area = h * w;
    let n = (b * area) as f64;
    let dy = grad_out.data();
    let xh = xhat.data();
    let mut dgamma = vec![0.0f64; c];
    let mut dbeta = vec![0.0f64; c];
    for s in 0..b {
        for ch in 0..c {
            let off = (s * c + ch) * area;
            for i in off..off + area {
                dbeta[ch] += f64::from(dy[i]);
                dgamma[ch] += f64::from(dy[i]) * f64::from(xh[i]);
            }
        }
    }
    let mut dx = Tensor::zeros(xhat.shape());
    if n > 0.0 {
        for (i, d) in dx.data_mut().iter_mut().enumerate() {
            let ch = (i / area) % c;
            let g = f64::from(gamma.data()[ch]);
            let term = n * f64::from(dy[i]) - dbeta[ch] - f64::from(xh[i]) * dgamma[ch];
            *d = (g * f64::from(cache.inv_std[ch]) * term / n) as f32;
        }
    }
    Ok(BatchNormGrads {
        input: dx,
        gamma: Tensor::new(vec![c], dgamma.iter().map(|&v| v as f32).collect())?,
        beta: Tensor::new(vec![c], dbeta.iter().map(|&v| v as f32).collect())?,
    })
}
