//! L1-norm filter ranking and structured filter removal.
//!
//! Removing filter `f` from a conv layer also removes, walking down the chain:
//! channel `f` of any BatchNorm, channel `f` of any DepthwiseConv (its own
//! filter and bias, since depthwise layers keep channel identity), and finally
//! the matching input slice of the first consumer that mixes channels: the
//! `f`-th kernel slab of a Conv/PointwiseConv, or the input column(s) of a
//! Dense layer (one column after global average pooling, `H*W` columns after
//! a flatten). ReLU and max pooling are transparent.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ActShape, LayerKind, LayerSpec, ModelGraph, BIAS, WEIGHT};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterNorm {
    pub index: usize,
    pub norm: f64,
}

/// Filters of one layer sorted by ascending L1 norm; ties keep index order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterNormProfile {
    pub layer_id: String,
    pub entries: Vec<FilterNorm>,
}

impl FilterNormProfile {
    pub fn norms(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.norm).collect()
    }

    /// Indices of the `m` lowest-norm filters, in ascending index order.
    pub fn lowest(&self, m: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = self.entries.iter().take(m).map(|e| e.index).collect();
        idx.sort_unstable();
        idx
    }
}

/// `(layer, m)`: remove the `m` lowest-norm filters of `layer`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PruneRequest {
    pub layer: String,
    pub m: usize,
}

impl PruneRequest {
    pub fn new(layer: impl Into<String>, m: usize) -> Self {
        PruneRequest { layer: layer.into(), m }
    }
}

/// A request resolved against a concrete model state.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PruningStep {
    pub layer: String,
    pub m: usize,
    /// Filters to remove, ascending.
    pub indices: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Manual,
    SensitivityGuided,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PruningPlan {
    pub steps: Vec<PruningStep>,
    pub provenance: Provenance,
}

/// L1 norm of every filter of a conv layer, in filter order. Bias is not included.
pub fn filter_l1_norms(layer: &LayerSpec) -> Vec<f64> {
    let weight = layer.weight();
    let n = layer.filters();
    if n == 0 {
        return Vec::new();
    }
    let per = weight.numel() / n;
    if per == 0 {
        return vec![0.0; n];
    }
    weight
        .data()
        .chunks(per)
        .map(|f| f.iter().map(|&v| f64::from(v.abs())).sum())
        .collect()
}

fn prunable_layer<'a>(model: &'a ModelGraph, layer_id: &str) -> Result<(usize, &'a LayerSpec)> {
    let idx = model.layer_index(layer_id)?;
    let layer = &model.layers()[idx];
    if !layer.prunable || !layer.kind.is_filter_conv() {
        return Err(Error::NotPrunable(layer_id.to_string()));
    }
    Ok((idx, layer))
}

pub fn compute_norm_profile(model: &ModelGraph, layer_id: &str) -> Result<FilterNormProfile> {
    let (_, layer) = prunable_layer(model, layer_id)?;
    let mut entries: Vec<FilterNorm> = filter_l1_norms(layer)
        .into_iter()
        .enumerate()
        .map(|(index, norm)| FilterNorm { index, norm })
        .collect();
    // Stable sort keeps lower indices first among equal norms.
    entries.sort_by(|a, b| a.norm.total_cmp(&b.norm));
    Ok(FilterNormProfile {
        layer_id: layer_id.to_string(),
        entries,
    })
}

pub fn resolve_step(model: &ModelGraph, request: &PruneRequest) -> Result<PruningStep> {
    let (_, layer) = prunable_layer(model, &request.layer)?;
    check_count(&request.layer, request.m, layer.filters())?;
    let profile = compute_norm_profile(model, &request.layer)?;
    Ok(PruningStep {
        layer: request.layer.clone(),
        m: request.m,
        indices: profile.lowest(request.m),
    })
}

fn check_count(layer: &str, m: usize, filters: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::InvalidStep {
            layer: layer.to_string(),
            reason: "m must be at least 1".into(),
        });
    }
    if m >= filters {
        return Err(Error::InvalidStep {
            layer: layer.to_string(),
            reason: format!("cannot remove {m} of {filters} filters; a layer must keep at least one"),
        });
    }
    Ok(())
}

/// Resolves requests one at a time, each against the model as pruned by
/// the steps before it.
pub fn resolve_plan(model: &ModelGraph, requests: &[PruneRequest], provenance: Provenance) -> Result<PruningPlan> {
    let mut scratch = model.clone();
    let mut steps = Vec::with_capacity(requests.len());
    for (i, req) in requests.iter().enumerate() {
        let step = resolve_step(&scratch, req).map_err(|e| e.at_plan_step(i))?;
        scratch = prune_filters(&scratch, &step)?;
        steps.push(step);
    }
    Ok(PruningPlan { steps, provenance })
}

pub fn apply_plan(model: &ModelGraph, plan: &PruningPlan) -> Result<ModelGraph> {
    let mut out = model.clone();
    for step in &plan.steps {
        out = prune_filters(&out, step)?;
    }
    Ok(out)
}

fn check_step(model: &ModelGraph, step: &PruningStep) -> Result<usize> {
    let (idx, layer) = prunable_layer(model, &step.layer)?;
    check_count(&step.layer, step.m, layer.filters())?;
    let invalid = |reason: String| Error::InvalidStep {
        layer: step.layer.clone(),
        reason,
    };
    if step.indices.len() != step.m {
        return Err(invalid(format!("{} indices listed for m = {}", step.indices.len(), step.m)));
    }
    let mut sorted = step.indices.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != step.indices.len() {
        return Err(invalid("duplicate filter indices".into()));
    }
    if let Some(&bad) = sorted.last().filter(|&&i| i >= layer.filters()) {
        return Err(invalid(format!("filter {bad} out of range ({} filters)", layer.filters())));
    }
    Ok(idx)
}

/// Returns a copy of `model` with the step's filters and every dependent
/// slice removed. The input model is not modified.
pub fn prune_filters(model: &ModelGraph, step: &PruningStep) -> Result<ModelGraph> {
    let start = check_step(model, step)?;
    let shapes = model.activation_shapes(model.input_shape())?;
    let mut out = model.clone();
    let layers = out.layers_mut();

    let n = layers[start].filters();
    let mut removed = step.indices.clone();
    removed.sort_unstable();
    let keep: Vec<usize> = (0..n).filter(|i| removed.binary_search(i).is_err()).collect();
    remove_output_channels(&mut layers[start], &keep);

    // Indices into the current activation's leading axis that survive.
    let mut kept = keep.clone();
    let mut consumed = false;
    for j in start + 1..layers.len() {
        let layer = &mut layers[j];
        match layer.kind {
            LayerKind::BatchNorm => {
                for t in layer.params.values_mut() {
                    *t = t.select(0, &kept);
                }
                layer.hp.in_channels = kept.len();
                layer.hp.out_channels = kept.len();
            }
            LayerKind::DepthwiseConv => remove_output_channels(layer, &kept),
            LayerKind::ReLU | LayerKind::MaxPool | LayerKind::GlobalAvgPool => {}
            LayerKind::Flatten => {
                if let ActShape::Spatial { h, w, .. } = shapes[j - 1] {
                    let area = h * w;
                    kept = kept
                        .iter()
                        .flat_map(|&c| c * area..(c + 1) * area)
                        .collect();
                }
            }
            LayerKind::Conv | LayerKind::PointwiseConv => {
                let w = layer.weight().select(1, &kept);
                layer.params.insert(WEIGHT.into(), w);
                layer.hp.in_channels = kept.len();
                consumed = true;
                break;
            }
            LayerKind::Dense => {
                let w = layer.weight().select(1, &kept);
                layer.params.insert(WEIGHT.into(), w);
                layer.hp.in_channels = kept.len();
                consumed = true;
                break;
            }
        }
    }
    if !consumed {
        return Err(Error::InvalidStep {
            layer: step.layer.clone(),
            reason: "no downstream layer consumes its output".into(),
        });
    }
    out.validate()?;
    Ok(out)
}

fn remove_output_channels(layer: &mut LayerSpec, keep: &[usize]) {
    let w = layer.weight().select(0, keep);
    layer.params.insert(WEIGHT.into(), w);
    if let Some(b) = layer.params.get(BIAS).map(|b| b.select(0, keep)) {
        layer.params.insert(BIAS.into(), b);
    }
    layer.hp.out_channels = keep.len();
    if layer.kind == LayerKind::DepthwiseConv {
        layer.hp.in_channels = keep.len();
    }
}

/// Parses a plan file: a JSON array of `{"layer": "...", "m": N}` objects.
/// Errors name the offending step (0-based).
pub fn parse_requests(json: &str) -> Result<Vec<PruneRequest>> {
    let value: serde_json::Value =
        serde_json::from_str(json).map_err(|e| Error::Format(format!("plan: {e}")))?;
    let items = value
        .as_array()
        .ok_or_else(|| Error::Format("plan: expected a JSON array of steps".into()))?;
    items
        .iter()
        .enumerate()
        .map(|(i, item)| {
            serde_json::from_value::<PruneRequest>(item.clone())
                .map_err(|e| Error::Format(format!("plan step {i}: {e}")))
        })
        .collect()
}

pub fn requests_to_json(requests: &[PruneRequest]) -> String {
    serde_json::to_string_pretty(requests).expect("requests serialize")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelBuilder;

    fn two_filter_model() -> ModelGraph {
        let mut m = ModelBuilder::new([3, 5, 5])
            .conv("conv", 2, 3, 1, 1, false)
            .relu("relu")
            .conv("next", 4, 3, 1, 1, false)
            .global_avg_pool("gap")
            .dense("fc", 2)
            .build(2, 0)
            .unwrap();
        let w = m.param_data_mut("conv", WEIGHT).unwrap();
        w[..27].iter_mut().for_each(|v| *v = 1.0);
        w[27..].iter_mut().for_each(|v| *v = 0.5);
        m
    }

    #[test]
    fn hand_computed_profile() {
        let m = two_filter_model();
        let p = compute_norm_profile(&m, "conv").unwrap();
        assert_eq!(p.norms(), vec![13.5, 27.0]);
        assert_eq!(p.entries[0].index, 1);
        let step = resolve_step(&m, &PruneRequest::new("conv", 1)).unwrap();
        assert_eq!(step.indices, vec![1]);
    }

    #[test]
    fn zero_weights_give_zero_norms_and_ties_keep_order() {
        let mut m = two_filter_model();
        m.param_data_mut("conv", WEIGHT).unwrap().iter_mut().for_each(|v| *v = 0.0);
        let p = compute_norm_profile(&m, "conv").unwrap();
        assert_eq!(p.norms(), vec![0.0, 0.0]);
        assert_eq!(p.entries.iter().map(|e| e.index).collect::<Vec<_>>(), vec![0, 1]);
    }

    #[test]
    fn rejects_bad_requests() {
        let m = two_filter_model();
        assert!(matches!(
            resolve_step(&m, &PruneRequest::new("fc", 1)),
            Err(Error::NotPrunable(_))
        ));
        assert!(matches!(
            resolve_step(&m, &PruneRequest::new("nope", 1)),
            Err(Error::UnknownLayer(_))
        ));
        assert!(matches!(
            resolve_step(&m, &PruneRequest::new("conv", 2)),
            Err(Error::InvalidStep { .. })
        ));
        assert!(resolve_step(&m, &PruneRequest::new("conv", 0)).is_err());
    }

    #[test]
    fn surgery_updates_consumer() {
        let m = two_filter_model();
        let step = resolve_step(&m, &PruneRequest::new("conv", 1)).unwrap();
        let p = prune_filters(&m, &step).unwrap();
        assert_eq!(p.layer("conv").unwrap().weight().shape(), &[1, 3, 3, 3]);
        assert_eq!(p.layer("next").unwrap().weight().shape(), &[4, 1, 3, 3]);
        // Original untouched.
        assert_eq!(m.layer("conv").unwrap().filters(), 2);
    }

    #[test]
    fn empty_plan() {
        let m = two_filter_model();
        let plan = resolve_plan(&m, &[], Provenance::Manual).unwrap();
        assert!(plan.steps.is_empty());
        assert_eq!(apply_plan(&m, &plan).unwrap(), m);
    }

    #[test]
    fn plan_parsing_names_offending_step() {
        let ok = parse_requests(r#"[{"layer":"conv8","m":320}]"#).unwrap();
        assert_eq!(ok, vec![PruneRequest::new("conv8", 320)]);
        let err = parse_requests(r#"[{"layer":"a","m":1},{"layer":"b"}]"#).unwrap_err();
        assert!(err.to_string().contains("step 1"), "{err}");
        assert!(parse_requests("{}").is_err());
        assert!(parse_requests(r#"[{"layer":"a","m":-1}]"#).is_err());
    }
}
