use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// 2x2 max pooling with stride 2 (odd trailing rows/columns are dropped).
/// Returns the output and, per output element, the flat input index of the
/// selected maximum (first maximum on ties).
pub fn maxpool2d_forward(input: &Tensor) -> Result<(Tensor, Vec<u32>)> {
    let (b, c, h, w) = input.dims4("maxpool2d input")?;
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor::zeros(&[b, c, oh, ow]);
    let mut argmax = vec![0u32; out.numel()];
    let x = input.data();
    let y = out.data_mut();
    for plane in 0..b * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + 2 * oy * w + 2 * ox;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * oy + dy) * w + 2 * ox + dx;
                    if x[idx] > x[best] {
                        best = idx;
                    }
                }
                let o = (plane * oh + oy) * ow + ox;
                y[o] = x[best];
                argmax[o] = best as u32;
            }
        }
    }
    Ok((out, argmax))
}

pub fn maxpool2d_backward(input_shape: &[usize], argmax: &[u32], grad_out: &Tensor) -> Result<Tensor> {
    if argmax.len() != grad_out.numel() {
        return Err(Error::shape("maxpool2d grad_out", argmax.len(), grad_out.numel()));
    }
    let mut g = Tensor::zeros(input_shape);
    let gd = g.data_mut();
    for (&idx, &v) in argmax.iter().zip(grad_out.data()) {
        gd[idx as usize] += v;
    }
    Ok(g)
}

/// `(B, C, H, W) -> (B, C)`: channel `c` maps to feature `c`.
pub fn global_avg_pool_forward(input: &Tensor) -> Result<Tensor> {
    let (b, c, h, w) = input.dims4("global_avg_pool input")?;
    let area = h * w;
    let mut out = Tensor::zeros(&[b, c]);
    if area == 0 {
        return Ok(out);
    }
    let inv = 1.0 / area as f32;
    for (o, plane) in out.data_mut().iter_mut().zip(input.data().chunks(area)) {
        *o = plane.iter().sum::<f32>() * inv;
    }
    Ok(out)
}

pub fn global_avg_pool_backward(input_shape: &[usize], grad_out: &Tensor) -> Result<Tensor> {
    let (b, c, h, w) = match *input_shape {
        [b, c, h, w] => (b, c, h, w),
        _ => return Err(Error::shape("global_avg_pool input", "rank 4", input_shape)),
    };
    if grad_out.shape() != [b, c] {
        return Err(Error::shape("global_avg_pool grad_out", [b, c], grad_out.shape()));
    }
    let area = h * w;
    let mut g = Tensor::zeros(input_shape);
    if area == 0 {
        return Ok(g);
    }
    let inv = 1.0 / area as f32;
    for (plane, &v) in g.data_mut().chunks_mut(area).zip(grad_out.data()) {
        plane.iter_mut().for_each(|p| *p = v * inv);
    }
    Ok(g)
}
