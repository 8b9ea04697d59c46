//! Raw dataset files (`.pkds`) in the shared container layout.
//!
//! Header JSON: `{"split": "train"|"val"|"test", "num_classes": K, "shape": [N, C, H, W]}`.
//! Payload: `N*C*H*W` f32 pixels (LE, NCHW order) followed by `N` u32 labels (LE).

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LabeledDataset, Split};
use crate::container::{self, push_f32s, push_u32s, BlobReader};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const RAW_MAGIC: &[u8; 8] = b"PKDS\r\n\x1a\n";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    split: Split,
    num_classes: usize,
    shape: [usize; 4],
}

fn to_bytes(d: &LabeledDataset) -> Vec<u8> {
    let [c, h, w] = d.sample_shape();
    let header = Header {
        split: d.split(),
        num_classes: d.num_classes(),
        shape: [d.len(), c, h, w],
    };
    let mut payload = Vec::new();
    push_f32s(&mut payload, d.images().data());
    push_u32s(&mut payload, d.labels().iter().map(|&l| l as u32));
    container::encode(RAW_MAGIC, &serde_json::to_vec(&header).expect("header"), &payload)
}

fn from_bytes(bytes: &[u8]) -> Result<LabeledDataset> {
    let what = "raw dataset";
    let (header, payload) = container::decode(RAW_MAGIC, bytes, what)?;
    let header: Header = serde_json::from_slice(header)
        .map_err(|e| Error::Format(format!("{what}: bad header: {e}")))?;
    let [n, c, h, w] = header.shape;
    let mut reader = BlobReader::new(payload, what);
    let pixels = reader.f32s(n * c * h * w, "images")?;
    let labels = reader.u32s(n, "labels")?;
    reader.finish()?;
    if let Some((i, v)) = pixels.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Format(format!("{what}: pixel {i} is {v}, outside [0, 1]")));
    }
    LabeledDataset::new(
        Tensor::new(header.shape.to_vec(), pixels)?,
        labels.into_iter().map(|l| l as usize).collect(),
        header.num_classes,
        header.split,
    )
}

pub fn write_raw(path: &Path, dataset: &LabeledDataset) -> Result<()> {
    std::fs::write(path, to_bytes(dataset))?;
    Ok(())
}

pub fn read_raw(path: &Path) -> Result<LabeledDataset> {
    from_bytes(&std::fs::read(path)?)
}

/// Reads `train.pkds` and, when present, `val.pkds` from `dir`.
pub fn load_raw_dir(dir: &Path) -> Result<(LabeledDataset, Option<LabeledDataset>)> {
    let train = read_raw(&dir.join("train.pkds"))?;
    let val_path = dir.join("val.pkds");
    let val = if val_path.exists() {
        Some(read_raw(&val_path)?)
    } else {
        None
    };
    Ok((train, val))
}
