#![allow(dead_code)]

use prunekit::rng::{rng_for, Rng};
use prunekit::Tensor;
use rand::seq::SliceRandom;
use rand::Rng as _;

pub const FD_EPS: f32 = 1e-2;

pub fn rng(seed: u64) -> Rng {
    rng_for(seed, "test")
}

pub fn uniform(shape: &[usize], rng: &mut Rng) -> Tensor {
    Tensor::uniform(shape, -1.0, 1.0, rng)
}

/// Values bounded away from zero so an `FD_EPS` nudge never crosses a ReLU kink.
pub fn away_from_zero(shape: &[usize], rng: &mut Rng) -> Tensor {
    Tensor::from_fn(shape, |_| {
        let mag = rng.gen_range(0.05f32..1.0);
        if rng.gen_bool(0.5) {
            mag
        } else {
            -mag
        }
    })
}

/// Distinct values at least 0.05 apart in random order, so max-pool
/// winners are stable under an `FD_EPS` nudge.
pub fn well_separated(shape: &[usize], rng: &mut Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let mut vals: Vec<f32> = (0..n).map(|i| i as f32 * 0.05 - n as f32 * 0.025).collect();
    vals.shuffle(rng);
    Tensor::new(shape.to_vec(), vals).unwrap()
}

/// `sum(out * r)` accumulated in f64.
pub fn dot(out: &Tensor, r: &Tensor) -> f64 {
    out.data().iter().zip(r.data()).map(|(&a, &b)| f64::from(a) * f64::from(b)).sum()
}

/// Central differences of `f` with respect to every element of `x`.
pub fn numeric_grad(x: &Tensor, f: impl FnMut(&Tensor) -> f64) -> Vec<f64> {
    numeric_grad_with(x, FD_EPS, f)
}

pub fn numeric_grad_with(x: &Tensor, eps: f32, mut f: impl FnMut(&Tensor) -> f64) -> Vec<f64> {
    let mut probe = x.clone();
    (0..x.numel())
        .map(|i| {
            let orig = probe.data()[i];
            probe.data_mut()[i] = orig + eps;
            let up = f(&probe);
            probe.data_mut()[i] = orig - eps;
            let down = f(&probe);
            probe.data_mut()[i] = orig;
            (up - down) / (2.0 * f64::from(eps))
        })
        .collect()
}

/// Norm-wise relative error `|a - n| / max(|a|, |n|)` (0 when both vanish).
pub fn rel_err(analytic: &Tensor, numeric: &[f64]) -> f64 {
    assert_eq!(analytic.numel(), numeric.len());
    let diff: f64 = analytic
        .data()
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (f64::from(a) - n).powi(2))
        .sum::<f64>()
        .sqrt();
    let na = analytic.data().iter().map(|&a| f64::from(a).powi(2)).sum::<f64>().sqrt();
    let nn = numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
    let scale = na.max(nn);
    if scale < 1e-12 {
        0.0
    } else {
        diff / scale
    }
}

/// Plain nested-loop convolution, the reference for the im2col kernels.
pub fn naive_conv(input: &Tensor, weight: &Tensor, bias: Option<&Tensor>, stride: usize, pad: usize) -> Tensor {
    let s = input.shape();
    let (b, c, h, w) = (s[0], s[1], s[2], s[3]);
    let (co, k) = (weight.shape()[0], weight.shape()[2]);
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (w + 2 * pad - k) / stride + 1;
    let x = input.data();
    let wt = weight.data();
    Tensor::from_fn(&[b, co, oh, ow], |i| {
        let (n, o, oy, ox) = (i / (co * oh * ow), (i / (oh * ow)) % co, (i / ow) % oh, i % ow);
        let mut acc = bias.map_or(0.0, |t| f64::from(t.data()[o]));
        for ci in 0..c {
            for ky in 0..k {
                for kx in 0..k {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    let ix = (ox * stride + kx) as isize - pad as isize;
                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                        continue;
                    }
                    let xv = x[((n * c + ci) * h + iy as usize) * w + ix as usize];
                    let wv = wt[((o * c + ci) * k + ky) * k + kx];
                    acc += f64::from(xv) * f64::from(wv);
                }
            }
        }
        acc as f32
    })
}
