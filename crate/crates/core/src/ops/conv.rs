use std::borrow::Cow;

use rayon::prelude::*;

use super::gemm::gemm;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Samples per partial weight-gradient accumulator. Fixed so the reduction
/// order, and therefore the result bits, does not depend on the thread count.
const GRAD_CHUNK: usize = 4;

/// Output extent of a convolution or pooling window along one axis.
pub fn conv_out_dim(size: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = size + 2 * padding;
    if kernel == 0 || stride == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

#[derive(Clone, Copy, Debug)]
struct Geom {
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl Geom {
    fn new(
        context: &str,
        (c, h, w): (usize, usize, usize),
        k: usize,
        stride: usize,
        pad: usize,
    ) -> Result<Self> {
        let (oh, ow) = match (conv_out_dim(h, k, stride, pad), conv_out_dim(w, k, stride, pad)) {
            (Some(oh), Some(ow)) => (oh, ow),
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "{context}: kernel {k} stride {stride} padding {pad} does not fit a {h}x{w} input"
                )))
            }
        };
        Ok(Geom { c, h, w, k, stride, pad, oh, ow })
    }

    fn is_identity_window(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }

    fn col_rows(&self) -> usize {
        self.c * self.k * self.k
    }

    fn out_area(&self) -> usize {
        self.oh * self.ow
    }

    /// Source pixel for window offset `(ky, kx)` at output `(oy, ox)`, if inside the image.
    #[inline]
    fn source(&self, oy: usize, ox: usize, ky: usize, kx: usize) -> Option<(usize, usize)> {
        let iy = (oy * self.stride + ky).checked_sub(self.pad)?;
        let ix = (ox * self.stride + kx).checked_sub(self.pad)?;
        (iy < self.h && ix < self.w).then_some((iy, ix))
    }

    fn im2col(&self, image: &[f32], col: &mut [f32]) {
        let area = self.out_area();
        for c in 0..self.c {
            let plane = &image[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ky in 0..self.k {
                for kx in 0..self.k {
                    let row = (c * self.k + ky) * self.k + kx;
                    let dst = &mut col[row * area..(row + 1) * area];
                    for oy in 0..self.oh {
                        for ox in 0..self.ow {
                            dst[oy * self.ow + ox] = match self.source(oy, ox, ky, kx) {
                                Some((iy, ix)) => plane[iy * self.w + ix],
                                None => 0.0,
                            };
                        }
                    }
                }
            }
        }
    }

    fn col2im(&self, col: &[f32], image: &mut [f32]) {
        let area = self.out_area();
        image.iter_mut().for_each(|v| *v = 0.0);
        for c in 0..self.c {
            let plane = &mut image[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ky in 0..self.k {
                for kx in 0..self.k {
                    let row = (c * self.k + ky) * self.k + kx;
                    let src = &col[row * area..(row + 1) * area];
                    for oy in 0..self.oh {
                        for ox in 0..self.ow {
                            if let Some((iy, ix)) = self.source(oy, ox, ky, kx) {
                                plane[iy * self.w + ix] += src[oy * self.ow + ox];
                            }
                        }
                    }
                }
            }
        }
    }

    fn columns<'a>(&self, image: &'a [f32]) -> Cow<'a, [f32]> {
        if self.is_identity_window() {
            Cow::Borrowed(image)
        } else {
            let mut col = vec![0.0; self.col_rows() * self.out_area()];
            self.im2col(image, &mut col);
            Cow::Owned(col)
        }
    }
}

fn check_conv_args(
    input: &Tensor,
    weight: &Tensor,
    bias: Option<&Tensor>,
) -> Result<(usize, usize, usize, usize, usize, usize)> {
    let (b, c, h, w) = input.dims4("conv2d input")?;
    let (co, ci, kh, kw) = weight.dims4("conv2d weight")?;
    if ci != c {
        return Err(Error::shape(
            "conv2d input channels",
            weight.shape(),
            input.shape(),
        ));
    }
    if kh != kw {
        return Err(Error::shape("conv2d square kernel", [kh, kh], [kh, kw]));
    }
    if let Some(bias) = bias {
        if bias.shape() != [co] {
            return Err(Error::shape("conv2d bias", [co], bias.shape()));
        }
    }
    Ok((b, c, h, w, co, kh))
}

/// Standard 2-D convolution. `weight` is `(C_out, C_in, k, k)`.
pub fn conv2d_forward(
    input: &Tensor,
    weight: &Tensor,
    bias: Option<&Tensor>,
    stride: usize,
    padding: usize,
) -> Result<Tensor> {
    let (b, c, h, w, co, k) = check_conv_args(input, weight, bias)?;
    let g = Geom::new("conv2d", (c, h, w), k, stride, padding)?;
    let area = g.out_area();
    let mut out = Tensor::zeros(&[b, co, g.oh, g.ow]);
    if out.numel() == 0 {
        return Ok(out);
    }
    let in_len = c * h * w;
    out.data_mut()
        .par_chunks_mut(co * area)
        .zip(input.data().par_chunks(in_len.max(1)))
        .for_each(|(dst, image)| {
            let col = g.columns(image);
            gemm(co, g.col_rows(), area, weight.data(), false, &col, false, dst, 0.0);
            if let Some(bias) = bias {
                for (o, row) in dst.chunks_mut(area).enumerate() {
                    let bv = bias.data()[o];
                    row.iter_mut().for_each(|v| *v += bv);
                }
            }
        });
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct ConvGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Option<Tensor>,
}

pub fn conv2d_backward(
    input: &Tensor,
    weight: &Tensor,
    with_bias: bool,
    stride: usize,
    padding: usize,
    grad_out: &Tensor,
) -> Result<ConvGrads> {
    let (b, c, h, w, co, k) = check_conv_args(input, weight, None)?;
    let g = Geom::new("conv2d backward", (c, h, w), k, stride, padding)?;
    let area = g.out_area();
    if grad_out.shape() != [b, co, g.oh, g.ow] {
        return Err(Error::shape(
            "conv2d grad_out",
            [b, co, g.oh, g.ow],
            grad_out.shape(),
        ));
    }
    let in_len = c * h * w;
    let out_len = co * area;
    let rows = g.col_rows();
    let mut grad_input = Tensor::zeros(input.shape());

    let partials: Vec<(Vec<f32>, Vec<f32>)> = if b == 0 || in_len == 0 || out_len == 0 {
        Vec::new()
    } else {
        grad_input
            .data_mut()
            .par_chunks_mut(GRAD_CHUNK * in_len)
            .zip(input.data().par_chunks(GRAD_CHUNK * in_len))
            .zip(grad_out.data().par_chunks(GRAD_CHUNK * out_len))
            .map(|((dx_chunk, x_chunk), dy_chunk)| {
                let mut dw = vec![0.0f32; co * rows];
                let mut db = vec![0.0f32; co];
                let mut dcol = vec![0.0f32; rows * area];
                for ((dx, x), dy) in dx_chunk
                    .chunks_mut(in_len)
                    .zip(x_chunk.chunks(in_len))
                    .zip(dy_chunk.chunks(out_len))
                {
                    let col = g.columns(x);
                    // dW += dY (co x area) * col^T (area x rows)
                    gemm(co, area, rows, dy, false, &col, true, &mut dw, 1.0);
                    // dcol = W^T (rows x co) * dY (co x area)
                    if g.is_identity_window() {
                        gemm(rows, co, area, weight.data(), true, dy, false, dx, 0.0);
                    } else {
                        gemm(rows, co, area, weight.data(), true, dy, false, &mut dcol, 0.0);
                        g.col2im(&dcol, dx);
                    }
                    if with_bias {
                        for (o, row) in dy.chunks(area).enumerate() {
                            db[o] += row.iter().sum::<f32>();
                        }
                    }
                }
                (dw, db)
            })
            .collect()
    };

    let mut grad_weight = Tensor::zeros(weight.shape());
    let mut grad_bias = vec![0.0f32; co];
    for (dw, db) in &partials {
        for (a, v) in grad_weight.data_mut().iter_mut().zip(dw) {
            *a += v;
        }
        for (a, v) in grad_bias.iter_mut().zip(db) {
            *a += v;
        }
    }
    Ok(ConvGrads {
        input: grad_input,
        weight: grad_weight,
        bias: with_bias.then(|| Tensor::new(vec![co], grad_bias).expect("bias length")),
    })
}

fn check_depthwise_args(
    input: &Tensor,
    weight: &Tensor,
    bias: Option<&Tensor>,
) -> Result<(usize, usize, usize, usize, usize)> {
    let (b, c, h, w) = input.dims4("depthwise conv input")?;
    let (wc, one, kh, kw) = weight.dims4("depthwise conv weight")?;
    if wc != c || one != 1 || kh != kw {
        return Err(Error::shape(
            "depthwise conv weight",
            [c, 1, kh, kh],
            weight.shape(),
        ));
    }
    if let Some(bias) = bias {
        if bias.shape() != [c] {
            return Err(Error::shape("depthwise conv bias", [c], bias.shape()));
        }
    }
    Ok((b, c, h, w, kh))
}

/// Per-channel convolution. `weight` is `(C, 1, k, k)`; output channel `c`
/// reads only input channel `c`.
pub fn depthwise_conv2d_forward(
    input: &Tensor,
    weight: &Tensor,
    bias: Option<&Tensor>,
    stride: usize,
    padding: usize,
) -> Result<Tensor> {
    let (b, c, h, w, k) = check_depthwise_args(input, weight, bias)?;
    let g = Geom::new("depthwise conv", (1, h, w), k, stride, padding)?;
    let area = g.out_area();
    let mut out = Tensor::zeros(&[b, c, g.oh, g.ow]);
    if out.numel() == 0 {
        return Ok(out);
    }
    out.data_mut()
        .par_chunks_mut(area)
        .zip(input.data().par_chunks(h * w))
        .enumerate()
        .for_each(|(plane_idx, (dst, src))| {
            let ch = plane_idx % c;
            let kern = &weight.data()[ch * k * k..(ch + 1) * k * k];
            let bv = bias.map_or(0.0, |t| t.data()[ch]);
            for oy in 0..g.oh {
                for ox in 0..g.ow {
                    let mut acc = 0.0f32;
                    for ky in 0..k {
                        for kx in 0..k {
                            if let Some((iy, ix)) = g.source(oy, ox, ky, kx) {
                                acc += src[iy * w + ix] * kern[ky * k + kx];
                            }
                        }
                    }
                    dst[oy * g.ow + ox] = acc + bv;
                }
            }
        });
    Ok(out)
}

pub fn depthwise_conv2d_backward(
    input: &Tensor,
    weight: &Tensor,
    with_bias: bool,
    stride: usize,
    padding: usize,
    grad_out: &Tensor,
) -> Result<ConvGrads> {
    let (b, c, h, w, k) = check_depthwise_args(input, weight, None)?;
    let g = Geom::new("depthwise conv backward", (1, h, w), k, stride, padding)?;
    let area = g.out_area();
    if grad_out.shape() != [b, c, g.oh, g.ow] {
        return Err(Error::shape(
            "depthwise conv grad_out",
            [b, c, g.oh, g.ow],
            grad_out.shape(),
        ));
    }
    let mut grad_input = Tensor::zeros(input.shape());
    if grad_input.numel() > 0 && area > 0 {
        grad_input
            .data_mut()
            .par_chunks_mut(h * w)
            .zip(grad_out.data().par_chunks(area))
            .enumerate()
            .for_each(|(plane_idx, (dx, dy))| {
                let ch = plane_idx % c;
                let kern = &weight.data()[ch * k * k..(ch + 1) * k * k];
                for oy in 0..g.oh {
                    for ox in 0..g.ow {
                        let gv = dy[oy * g.ow + ox];
                        for ky in 0..k {
                            for kx in 0..k {
                                if let Some((iy, ix)) = g.source(oy, ox, ky, kx) {
                                    dx[iy * w + ix] += gv * kern[ky * k + kx];
                                }
                            }
                        }
                    }
                }
            });
    }

    // Weight and bias gradients: one task per channel, batch summed in order.
    let per_channel: Vec<(Vec<f32>, f32)> = (0..c)
        .into_par_iter()
        .map(|ch| {
            let mut dw = vec![0.0f32; k * k];
            let mut db = 0.0f32;
            for s in 0..b {
                let plane = (s * c + ch) * h * w;
                let src = &input.data()[plane..plane + h * w];
                let goff = (s * c + ch) * area;
                let dy = &grad_out.data()[goff..goff + area];
                for oy in 0..g.oh {
                    for ox in 0..g.ow {
                        let gv = dy[oy * g.ow + ox];
                        db += gv;
                        for ky in 0..k {
                            for kx in 0..k {
                                if let Some((iy, ix)) = g.source(oy, ox, ky, kx) {
                                    dw[ky * k + kx] += gv * src[iy * w + ix];
                                }
                            }
                        }
                    }
                }
            }
            (dw, db)
        })
        .collect();
    let mut grad_weight = Vec::with_capacity(c * k * k);
    let mut grad_bias = Vec::with_capacity(c);
    for (dw, db) in per_channel {
        grad_weight.extend(dw);
        grad_bias.push(db);
    }
    Ok(ConvGrads {
        input: grad_input,
        weight: Tensor::new(weight.shape().to_vec(), grad_weight)?,
        bias: with_bias.then(|| Tensor::new(vec![c], grad_bias).expect("bias length")),
    })
}
