use std::path::Path;

use super::{LabeledDataset, Split};
use crate::error::{Error, Result};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn read_u32_be(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| Error::Format(format!("{what}: truncated header")))
}

fn check_magic(bytes: &[u8], expected: u32, what: &str) -> Result<()> {
    let magic = read_u32_be(bytes, 0, what)?;
    if magic != expected {
        return Err(Error::Format(format!(
            "{what}: bad magic {magic:#010x} (expected {expected:#010x})"
        )));
    }
    Ok(())
}

fn payload<'a>(bytes: &'a [u8], offset: usize, len: usize, what: &str) -> Result<&'a [u8]> {
    let body = &bytes[offset..];
    if body.len() != len {
        return Err(Error::Format(format!(
            "{what}: header promises {len} payload bytes, file has {}",
            body.len()
        )));
    }
    Ok(body)
}

fn parse_images(bytes: &[u8]) -> Result<([usize; 3], &[u8])> {
    let what = "IDX images";
    check_magic(bytes, IDX_IMAGES_MAGIC, what)?;
    let n = read_u32_be(bytes, 4, what)? as usize;
    let rows = read_u32_be(bytes, 8, what)? as usize;
    let cols = read_u32_be(bytes, 12, what)? as usize;
    let pixels = payload(bytes, 16, n * rows * cols, what)?;
    Ok(([n, rows, cols], pixels))
}

fn parse_labels(bytes: &[u8]) -> Result<&[u8]> {
    let what = "IDX labels";
    check_magic(bytes, IDX_LABELS_MAGIC, what)?;
    let n = read_u32_be(bytes, 4, what)? as usize;
    payload(bytes, 8, n, what)
}

/// Decodes an IDX image/label file pair into `(N, 1, rows, cols)` images.
/// The class count is 10 unless a larger label appears.
pub fn idx_from_bytes(images: &[u8], labels: &[u8], split: Split) -> Result<LabeledDataset> {
    let ([n, rows, cols], pixels) = parse_images(images)?;
    let labels = parse_labels(labels)?;
    if labels.len() != n {
        return Err(Error::Format(format!(
            "IDX count mismatch: {n} images, {} labels",
            labels.len()
        )));
    }
    let labels: Vec<usize> = labels.iter().map(|&l| usize::from(l)).collect();
    let num_classes = labels.iter().max().map_or(10, |&m| (m + 1).max(10));
    LabeledDataset::from_u8([n, 1, rows, cols], pixels, labels, num_classes, split)
}

pub fn load_idx(images: &Path, labels: &Path, split: Split) -> Result<LabeledDataset> {
    idx_from_bytes(&std::fs::read(images)?, &std::fs::read(labels)?, split)
}

/// Loads the canonical MNIST file pair from `dir`: `train-*` for the train
/// split, `t10k-*` otherwise.
pub fn load_idx_dir(dir: &Path, split: Split) -> Result<LabeledDataset> {
    let prefix = if split == Split::Train { "train" } else { "t10k" };
    load_idx(
        &dir.join(format!("{prefix}-images-idx3-ubyte")),
        &dir.join(format!("{prefix}-labels-idx1-ubyte")),
        split,
    )
}

pub fn encode_idx_images(n: usize, rows: usize, cols: usize, pixels: &[u8]) -> Vec<u8> {
    assert_eq!(pixels.len(), n * rows * cols, "pixel count");
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IDX_IMAGES_MAGIC, n as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}
