//! `.pkpt` checkpoints.
//!
//! The file is a [container](crate::container) with magic `PKPT\r\n\x1a\n`.
//! The JSON header lists the input shape, class count and, per layer, its
//! id, kind, hyperparameters, prunable flag and `(name, shape)` for each
//! parameter. The payload is every parameter's f32 values, little-endian,
//! in header order (layers in chain order, parameters by name).
//!
//! On load every declared parameter shape must equal the shape implied by
//! the layer's kind and hyperparameters.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::container::{self, BlobReader};
use crate::error::{Error, Result};
use crate::model::graph::ModelGraph;
use crate::model::layer::{HyperParams, LayerKind, LayerSpec};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"PKPT\r\n\x1a\n";

#[derive(Serialize, Deserialize)]
struct Header {
    input_shape: [usize; 3],
    num_classes: usize,
    layers: Vec<LayerHeader>,
}

#[derive(Serialize, Deserialize)]
struct LayerHeader {
    id: String,
    kind: LayerKind,
    #[serde(flatten)]
    hp: HyperParams,
    prunable: bool,
    params: Vec<ParamHeader>,
}

#[derive(Serialize, Deserialize)]
struct ParamHeader {
    name: String,
    shape: Vec<usize>,
}

pub fn to_bytes(model: &ModelGraph) -> Result<Vec<u8>> {
    let header = Header {
        input_shape: model.input_shape(),
        num_classes: model.num_classes(),
        layers: model
            .layers()
            .iter()
            .map(|l| LayerHeader {
                id: l.id.clone(),
                kind: l.kind,
                hp: l.hp,
                prunable: l.prunable,
                params: l
                    .params
                    .iter()
                    .map(|(name, t)| ParamHeader {
                        name: name.clone(),
                        shape: t.shape().to_vec(),
                    })
                    .collect(),
            })
            .collect(),
    };
    let header = serde_json::to_vec(&header)?;
    let mut payload = Vec::new();
    for layer in model.layers() {
        for t in layer.params.values() {
            container::push_f32s(&mut payload, t.data());
        }
    }
    Ok(container::encode(MAGIC, &header, &payload))
}

pub fn from_bytes(bytes: &[u8]) -> Result<ModelGraph> {
    const WHAT: &str = "checkpoint";
    let (header, payload) = container::decode(MAGIC, bytes, WHAT)?;
    let header: Header = serde_json::from_slice(header)
        .map_err(|e| Error::Format(format!("{WHAT}: malformed header: {e}")))?;
    let mut reader = BlobReader::new(payload, WHAT);
    let mut layers = Vec::with_capacity(header.layers.len());
    for lh in header.layers {
        let mut params = BTreeMap::new();
        for ph in lh.params {
            let numel: usize = ph.shape.iter().product();
            let data = reader.f32s(numel, &format!("{}.{}", lh.id, ph.name))?;
            params.insert(ph.name, Tensor::new(ph.shape, data)?);
        }
        let layer = LayerSpec {
            id: lh.id,
            kind: lh.kind,
            hp: lh.hp,
            params,
            prunable: lh.prunable,
        };
        layer
            .check()
            .map_err(|e| Error::Format(format!("{WHAT}: {e}")))?;
        layers.push(layer);
    }
    reader.finish()?;
    ModelGraph::new(header.input_shape, header.num_classes, layers)
        .map_err(|e| Error::Format(format!("{WHAT}: {e}")))
}

pub fn save_checkpoint(model: &ModelGraph, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_bytes(model)?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelGraph> {
    from_bytes(&fs::read(path)?)
}
