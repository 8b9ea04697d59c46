use std::path::Path;

use super::{LabeledDataset, Split};
use crate::error::{Error, Result};

pub const CIFAR10_CLASSES: usize = 10;
/// One label byte followed by 3*32*32 channel-planar pixels.
pub const CIFAR10_RECORD_LEN: usize = 1 + 3 * 32 * 32;

/// Splits CIFAR-10 binary records into `(pixels, labels)`.
pub fn parse_cifar10_records(bytes: &[u8]) -> Result<(Vec<u8>, Vec<usize>)> {
    if bytes.is_empty() || !bytes.len().is_multiple_of(CIFAR10_RECORD_LEN) {
        return Err(Error::Format(format!(
            "CIFAR-10: {} bytes is not a positive multiple of the {CIFAR10_RECORD_LEN}-byte record",
            bytes.len()
        )));
    }
    let n = bytes.len() / CIFAR10_RECORD_LEN;
    let mut pixels = Vec::with_capacity(n * (CIFAR10_RECORD_LEN - 1));
    let mut labels = Vec::with_capacity(n);
    for (i, rec) in bytes.chunks_exact(CIFAR10_RECORD_LEN).enumerate() {
        let label = usize::from(rec[0]);
        if label >= CIFAR10_CLASSES {
            return Err(Error::Format(format!("CIFAR-10 record {i}: label {label} >= 10")));
        }
        labels.push(label);
        pixels.extend_from_slice(&rec[1..]);
    }
    Ok((pixels, labels))
}

fn dataset(pixels: &[u8], labels: Vec<usize>, split: Split) -> Result<LabeledDataset> {
    LabeledDataset::from_u8([labels.len(), 3, 32, 32], pixels, labels, CIFAR10_CLASSES, split)
}

pub fn load_cifar10_file(path: &Path, split: Split) -> Result<LabeledDataset> {
    let (pixels, labels) = parse_cifar10_records(&std::fs::read(path)?)?;
    dataset(&pixels, labels, split)
}

/// Concatenates `data_batch_1.bin` .. `data_batch_5.bin` found in `dir`.
/// At least one batch must be present.
pub fn load_cifar10_bin(dir: &Path) -> Result<LabeledDataset> {
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    for i in 1..=5 {
        let path = dir.join(format!("data_batch_{i}.bin"));
        if !path.exists() {
            continue;
        }
        let (p, l) = parse_cifar10_records(&std::fs::read(&path)?)?;
        pixels.extend(p);
        labels.extend(l);
    }
    if labels.is_empty() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("no data_batch_*.bin files in {}", dir.display()),
        )));
    }
    dataset(&pixels, labels, Split::Train)
}

pub fn load_cifar10_test(dir: &Path) -> Result<LabeledDataset> {
    load_cifar10_file(&dir.join("test_batch.bin"), Split::Test)
}

pub fn encode_cifar10_records(pixels: &[u8], labels: &[u8]) -> Vec<u8> {
    let len = CIFAR10_RECORD_LEN - 1;
    assert_eq!(pixels.len(), labels.len() * len, "pixel count");
    let mut out = Vec::with_capacity(labels.len() * CIFAR10_RECORD_LEN);
    for (l, p) in labels.iter().zip(pixels.chunks_exact(len)) {
        out.push(*l);
        out.extend_from_slice(p);
    }
    out
}
