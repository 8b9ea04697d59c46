//! Per-layer pruning sensitivity sweeps and filter-norm reports.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::model::ModelGraph;
use crate::prune::{compute_norm_profile, prune_filters, resolve_step, FilterNormProfile, PruneRequest};
use crate::train::evaluate;

pub const SENSITIVITY_CSV_HEADER: &str = "layer_id,fraction,accuracy";
pub const NORMS_CSV_HEADER: &str = "layer_id,rank,norm,norm_normalized";

/// `{0, 0.1, ..., 0.9}`.
pub fn default_fractions() -> Vec<f64> {
    (0..10).map(|i| f64::from(i) / 10.0).collect()
}

/// Parses `start:end:step` (inclusive end) or a comma-separated list.
pub fn parse_fractions(spec: &str) -> Result<Vec<f64>> {
    let bad = || Error::InvalidArgument(format!("bad fraction list `{spec}`"));
    let fractions: Vec<f64> = if spec.contains(':') {
        let parts: Vec<f64> = spec
            .split(':')
            .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        let [start, end, step] = parts[..] else {
            return Err(bad());
        };
        if step.is_nan() || step <= 0.0 || end < start {
            return Err(bad());
        }
        let count = ((end - start) / step + 1e-9).floor() as usize + 1;
        (0..count)
            .map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12)
            .collect()
    } else {
        spec.split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_>>()?
    };
    check_fractions(&fractions)?;
    Ok(fractions)
}

fn check_fractions(fractions: &[f64]) -> Result<()> {
    if let Some(f) = fractions.iter().find(|f| !(0.0..1.0).contains(*f)) {
        return Err(Error::InvalidArgument(format!("fraction {f} outside [0, 1)")));
    }
    if fractions.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "fractions must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Number of filters removed at `fraction` of `filters`.
pub fn pruned_count(fraction: f64, filters: usize) -> usize {
    (fraction * filters as f64 + 1e-9).floor() as usize
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityPoint {
    pub fraction: f64,
    pub pruned: usize,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityCurve {
    pub layer_id: String,
    pub filters: usize,
    pub baseline: f64,
    pub points: Vec<SensitivityPoint>,
}

impl SensitivityCurve {
    /// Mean accuracy drop over the sampled fractions; smaller is flatter.
    pub fn mean_drop(&self) -> f64 {
        if self.points.is_empty() {
            return 0.0;
        }
        self.points.iter().map(|p| self.baseline - p.accuracy).sum::<f64>() / self.points.len() as f64
    }
}

fn pruned_accuracy(model: &ModelGraph, layer_id: &str, m: usize, eval: &LabeledDataset) -> Result<f64> {
    let step = resolve_step(model, &PruneRequest::new(layer_id, m))?;
    evaluate(&prune_filters(model, &step)?, eval)
}

fn check_sweep(model: &ModelGraph, layer_id: &str, fractions: &[f64], eval: &LabeledDataset) -> Result<usize> {
    if eval.is_empty() {
        return Err(Error::InvalidArgument("evaluation set is empty".into()));
    }
    check_fractions(fractions)?;
    Ok(compute_norm_profile(model, layer_id)?.entries.len())
}

/// Accuracy of `model` with the `floor(f * n)` lowest-norm filters of one
/// layer removed, for each fraction `f`, without retraining.
pub fn sweep_layer(
    model: &ModelGraph,
    layer_id: &str,
    fractions: &[f64],
    eval: &LabeledDataset,
) -> Result<SensitivityCurve> {
    Ok(sweep_layers(model, &[layer_id], fractions, eval)?.remove(0))
}

/// Sweeps several layers. Every `(layer, pruned count)` cell is evaluated
/// independently on its own model copy.
pub fn sweep_layers(
    model: &ModelGraph,
    layer_ids: &[&str],
    fractions: &[f64],
    eval: &LabeledDataset,
) -> Result<Vec<SensitivityCurve>> {
    let mut filters = Vec::with_capacity(layer_ids.len());
    for id in layer_ids {
        filters.push(check_sweep(model, id, fractions, eval)?);
    }
    let baseline = evaluate(model, eval)?;
    let mut cells: Vec<(usize, usize)> = layer_ids
        .iter()
        .enumerate()
        .flat_map(|(l, _)| fractions.iter().map(move |&f| (l, f)))
        .map(|(l, f)| (l, pruned_count(f, filters[l])))
        .filter(|&(_, m)| m > 0)
        .collect();
    cells.dedup();
    let results: Vec<f64> = cells
        .par_iter()
        .map(|&(l, m)| pruned_accuracy(model, layer_ids[l], m, eval))
        .collect::<Result<_>>()?;
    let lookup = |l: usize, m: usize| {
        if m == 0 {
            baseline
        } else {
            let i = cells.binary_search(&(l, m)).expect("cell evaluated");
            results[i]
        }
    };
    Ok(layer_ids
        .iter()
        .enumerate()
        .map(|(l, id)| SensitivityCurve {
            layer_id: id.to_string(),
            filters: filters[l],
            baseline,
            points: fractions
                .iter()
                .map(|&fraction| {
                    let pruned = pruned_count(fraction, filters[l]);
                    SensitivityPoint {
                        fraction,
                        pruned,
                        accuracy: lookup(l, pruned),
                    }
                })
                .collect(),
        })
        .collect())
}

/// Sweeps every prunable layer in chain order.
pub fn sweep_all(model: &ModelGraph, fractions: &[f64], eval: &LabeledDataset) -> Result<Vec<SensitivityCurve>> {
    sweep_layers(model, &model.prunable_layers(), fractions, eval)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormReportEntry {
    pub profile: FilterNormProfile,
    /// Ascending norms divided by the layer maximum (all zero for an all-zero layer).
    pub normalized: Vec<f64>,
}

/// Ascending L1-norm profile of every prunable layer.
pub fn norm_report(model: &ModelGraph) -> Result<Vec<NormReportEntry>> {
    model
        .prunable_layers()
        .into_iter()
        .map(|id| {
            let profile = compute_norm_profile(model, id)?;
            let norms = profile.norms();
            let max = norms.last().copied().unwrap_or(0.0);
            let normalized = norms
                .iter()
                .map(|&n| if max > 0.0 { n / max } else { 0.0 })
                .collect();
            Ok(NormReportEntry { profile, normalized })
        })
        .collect()
}

pub fn sensitivity_csv(curves: &[SensitivityCurve]) -> String {
    let mut out = format!("{SENSITIVITY_CSV_HEADER}\n");
    for c in curves {
        for p in &c.points {
            let _ = writeln!(out, "{},{},{}", c.layer_id, p.fraction, p.accuracy);
        }
    }
    out
}

pub fn norms_csv(report: &[NormReportEntry]) -> String {
    let mut out = format!("{NORMS_CSV_HEADER}\n");
    for e in report {
        for (rank, (f, n)) in e.profile.entries.iter().zip(&e.normalized).enumerate() {
            let _ = writeln!(out, "{},{},{},{}", e.profile.layer_id, rank, f.norm, n);
        }
    }
    out
}

/// Greedy plan: layers ordered from flattest to steepest sensitivity curve
/// (ties keep chain order), each asked to lose `floor(fraction * n)` filters.
/// Layers where that count is zero are skipped.
pub fn greedy_plan(curves: &[SensitivityCurve], fraction: f64) -> Result<Vec<PruneRequest>> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "greedy fraction must be in (0, 1), got {fraction}"
        )));
    }
    let mut order: Vec<&SensitivityCurve> = curves.iter().collect();
    order.sort_by(|a, b| a.mean_drop().total_cmp(&b.mean_drop()));
    Ok(order
        .into_iter()
        .map(|c| PruneRequest::new(c.layer_id.clone(), pruned_count(fraction, c.filters)))
        .filter(|r| r.m > 0)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fraction_ranges() {
        assert_eq!(parse_fractions("0:0.9:0.1").unwrap(), default_fractions());
        assert_eq!(parse_fractions("0,0.5").unwrap(), vec![0.0, 0.5]);
        for bad in ["0:1:0.1", "0.5,0.2", "x", "0:0.5", "0:0.5:0"] {
            assert!(parse_fractions(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn counts_floor() {
        assert_eq!(pruned_count(0.3, 10), 3);
        assert_eq!(pruned_count(0.1, 4), 0);
        assert_eq!(pruned_count(0.7, 10), 7);
    }

    #[test]
    fn greedy_orders_by_flatness() {
        let curve = |id: &str, drop: f64| SensitivityCurve {
            layer_id: id.into(),
            filters: 8,
            baseline: 1.0,
            points: vec![SensitivityPoint {
                fraction: 0.5,
                pruned: 4,
                accuracy: 1.0 - drop,
            }],
        };
        let plan = greedy_plan(&[curve("a", 0.3), curve("b", 0.1), curve("c", 0.3)], 0.5).unwrap();
        let ids: Vec<&str> = plan.iter().map(|r| r.layer.as_str()).collect();
        assert_eq!(ids, ["b", "a", "c"]);
        assert!(plan.iter().all(|r| r.m == 4));
    }
}
