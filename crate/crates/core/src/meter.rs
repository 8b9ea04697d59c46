//! Exact parameter, FLOP and storage accounting.
//!
//! Conventions:
//! - Conv: `(k*k*C_in + bias) * C_out` params, `2*k*k*C_in*C_out*H_out*W_out` FLOPs.
//! - DepthwiseConv: `k*k*C (+C)` params, `2*k*k*C*H_out*W_out` FLOPs.
//! - Dense: `(F_in + 1) * F_out` params, `2*F_in*F_out` FLOPs.
//! - BatchNorm: `2*C` params (gamma, beta); running statistics are not counted.
//! - ReLU, pooling and flatten layers contribute nothing.
//! - Size is 4 bytes per parameter, reported in MB of 2^20 bytes.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::Result;
use crate::model::{ActShape, LayerKind, LayerSpec, ModelGraph};

pub const BYTES_PER_PARAM: u64 = 4;
pub const BYTES_PER_MB: f64 = 1_048_576.0;

pub const CSV_HEADER: &str = "layer_id,kind,params,flops,out_shape";
pub const FOOTER_NOTE: &str =
    "BatchNorm running statistics are excluded from parameter counts; FLOPs count 2 per multiply-accumulate over conv and dense layers";

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MeterRow {
    pub layer_id: String,
    pub kind: LayerKind,
    pub params: u64,
    pub flops: u64,
    pub out_shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeterReport {
    /// One row per parameterized layer, in chain order.
    pub rows: Vec<MeterRow>,
    pub total_params: u64,
    pub total_flops: u64,
    pub size_bytes: u64,
    pub size_mb: f64,
    pub note: &'static str,
}

pub fn layer_params(layer: &LayerSpec) -> u64 {
    let hp = &layer.hp;
    let (k, cin, cout) = (hp.kernel as u64, hp.in_channels as u64, hp.out_channels as u64);
    let bias = u64::from(hp.bias);
    match layer.kind {
        LayerKind::Conv | LayerKind::PointwiseConv => (k * k * cin + bias) * cout,
        LayerKind::DepthwiseConv => (k * k + bias) * cout,
        LayerKind::Dense => (cin + 1) * cout,
        LayerKind::BatchNorm => 2 * cout,
        _ => 0,
    }
}

/// FLOPs of `layer` given its output activation shape.
pub fn layer_flops(layer: &LayerSpec, out: ActShape) -> u64 {
    let hp = &layer.hp;
    let (k, cin, cout) = (hp.kernel as u64, hp.in_channels as u64, hp.out_channels as u64);
    let area = match out {
        ActShape::Spatial { h, w, .. } => (h * w) as u64,
        ActShape::Flat(_) => 1,
    };
    match layer.kind {
        LayerKind::Conv | LayerKind::PointwiseConv => 2 * k * k * cin * cout * area,
        LayerKind::DepthwiseConv => 2 * k * k * cout * area,
        LayerKind::Dense => 2 * cin * cout,
        _ => 0,
    }
}

pub fn count_params(model: &ModelGraph) -> u64 {
    model.layers().iter().map(layer_params).sum()
}

pub fn count_flops(model: &ModelGraph, input_shape: [usize; 3]) -> Result<u64> {
    let shapes = model.activation_shapes(input_shape)?;
    Ok(model
        .layers()
        .iter()
        .zip(shapes)
        .map(|(l, s)| layer_flops(l, s))
        .sum())
}

pub fn params_to_mb(params: u64) -> f64 {
    (params * BYTES_PER_PARAM) as f64 / BYTES_PER_MB
}

pub fn size_mb(model: &ModelGraph) -> f64 {
    params_to_mb(count_params(model))
}

/// Per-layer and total accounting at `input_shape`.
pub fn meter(model: &ModelGraph, input_shape: [usize; 3]) -> Result<MeterReport> {
    let shapes = model.activation_shapes(input_shape)?;
    let rows: Vec<MeterRow> = model
        .layers()
        .iter()
        .zip(shapes)
        .filter(|(l, _)| l.kind.has_params())
        .map(|(l, s)| MeterRow {
            layer_id: l.id.clone(),
            kind: l.kind,
            params: layer_params(l),
            flops: layer_flops(l, s),
            out_shape: s.dims(),
        })
        .collect();
    let total_params = rows.iter().map(|r| r.params).sum();
    let total_flops = rows.iter().map(|r| r.flops).sum();
    Ok(MeterReport {
        rows,
        total_params,
        total_flops,
        size_bytes: total_params * BYTES_PER_PARAM,
        size_mb: params_to_mb(total_params),
        note: FOOTER_NOTE,
    })
}

/// Meters the model at its own input shape.
pub fn meter_model(model: &ModelGraph) -> Result<MeterReport> {
    meter(model, model.input_shape())
}

impl MeterReport {
    pub fn params_m(&self) -> f64 {
        self.total_params as f64 / 1e6
    }

    pub fn flops_m(&self) -> f64 {
        self.total_flops as f64 / 1e6
    }

    /// CSV with header `layer_id,kind,params,flops,out_shape`. Non-empty
    /// reports end with a `total` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let shape = r.out_shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x");
            let _ = writeln!(out, "{},{},{},{},{}", r.layer_id, r.kind, r.params, r.flops, shape);
        }
        if !self.rows.is_empty() {
            let _ = writeln!(out, "total,,{},{},", self.total_params, self.total_flops);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_with_zero_filters_has_no_params() {
        let conv = LayerSpec::conv("c", 16, 0, 3, 1, 1, true);
        assert_eq!(layer_params(&conv), 0);
    }

    #[test]
    fn size_conversion() {
        assert_eq!(params_to_mb(0), 0.0);
        assert_eq!(params_to_mb(1 << 18), 1.0);
        assert_eq!(format!("{:.2}", params_to_mb(14_982_474)), "57.15");
    }

    #[test]
    fn empty_model_meters_to_zero() {
        let m = ModelGraph::new([3, 8, 8], 2, vec![]).unwrap();
        let r = meter_model(&m).unwrap();
        assert_eq!((r.total_params, r.total_flops, r.size_bytes), (0, 0, 0));
        assert_eq!(r.to_csv(), format!("{CSV_HEADER}\n"));
        assert_eq!(size_mb(&m), 0.0);
    }
}
