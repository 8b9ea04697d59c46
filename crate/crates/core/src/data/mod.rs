//! Labeled image datasets: loaders for IDX (MNIST), CIFAR-10 binary batches
//! and the raw `.pkds` container, plus splitting, batching and shape adaptation.

mod cifar;
mod idx;
mod raw;
pub mod synthetic;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use cifar::{
    encode_cifar10_records, load_cifar10_bin, load_cifar10_file, load_cifar10_test,
    parse_cifar10_records, CIFAR10_CLASSES, CIFAR10_RECORD_LEN,
};
pub use idx::{
    encode_idx_images, encode_idx_labels, idx_from_bytes, load_idx, load_idx_dir,
    IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC,
};
pub use raw::{load_raw_dir, read_raw, write_raw, RAW_MAGIC};

use crate::error::{Error, Result};
use crate::rng::rng_for;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Images `(N, C, H, W)` with one class label each.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    images: Tensor,
    labels: Vec<usize>,
    num_classes: usize,
    split: Split,
}

impl LabeledDataset {
    pub fn new(images: Tensor, labels: Vec<usize>, num_classes: usize, split: Split) -> Result<Self> {
        let (n, _, _, _) = images.dims4("dataset images")?;
        if n != labels.len() {
            return Err(Error::Format(format!(
                "{n} images but {} labels",
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Format(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        Ok(LabeledDataset {
            images,
            labels,
            num_classes,
            split,
        })
    }

    /// Builds a dataset from 8-bit pixels scaled by 1/255.
    pub fn from_u8(
        shape: [usize; 4],
        pixels: &[u8],
        labels: Vec<usize>,
        num_classes: usize,
        split: Split,
    ) -> Result<Self> {
        let data = pixels.iter().map(|&p| f32::from(p) / 255.0).collect();
        Self::new(Tensor::new(shape.to_vec(), data)?, labels, num_classes, split)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn images(&self) -> &Tensor {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    pub fn sample_shape(&self) -> [usize; 3] {
        let s = self.images.shape();
        [s[1], s[2], s[3]]
    }

    fn sample_len(&self) -> usize {
        self.sample_shape().iter().product()
    }

    /// Stacks the listed samples into a batch.
    pub fn batch(&self, indices: &[usize]) -> (Tensor, Vec<usize>) {
        let len = self.sample_len();
        let mut data = Vec::with_capacity(indices.len() * len);
        for &i in indices {
            data.extend_from_slice(&self.images.data()[i * len..(i + 1) * len]);
        }
        let [c, h, w] = self.sample_shape();
        let images = Tensor::new(vec![indices.len(), c, h, w], data).expect("batch shape");
        (images, indices.iter().map(|&i| self.labels[i]).collect())
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        let (images, labels) = self.batch(indices);
        LabeledDataset {
            images,
            labels,
            num_classes: self.num_classes,
            split: self.split,
        }
    }

    /// The first `n` samples (all of them if `n >= len`).
    pub fn take(&self, n: usize) -> Self {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx)
    }

    /// A seeded random subset of `n` samples, kept in original order.
    pub fn sample(&self, n: usize, seed: u64) -> Self {
        if n >= self.len() {
            return self.clone();
        }
        let mut idx = shuffled_indices(self.len(), seed, "sample");
        idx.truncate(n);
        idx.sort_unstable();
        self.subset(&idx)
    }

    /// Converts to another `(C, H, W)` layout: single-channel images are
    /// replicated across channels and smaller images are zero-padded to the
    /// centre. Other conversions are rejected.
    pub fn adapt_to(&self, target: [usize; 3]) -> Result<Self> {
        let [c, h, w] = self.sample_shape();
        let [tc, th, tw] = target;
        if [c, h, w] == target {
            return Ok(self.clone());
        }
        if !(c == tc || c == 1) || th < h || tw < w {
            return Err(Error::InvalidArgument(format!(
                "cannot adapt {:?} images to {:?}",
                [c, h, w],
                target
            )));
        }
        let (top, left) = ((th - h) / 2, (tw - w) / 2);
        let n = self.len();
        let mut out = Tensor::zeros(&[n, tc, th, tw]);
        let src = self.images.data();
        let dst = out.data_mut();
        for s in 0..n {
            for oc in 0..tc {
                let ic = if c == 1 { 0 } else { oc };
                for y in 0..h {
                    let from = ((s * c + ic) * h + y) * w;
                    let to = ((s * tc + oc) * th + y + top) * tw + left;
                    dst[to..to + w].copy_from_slice(&src[from..from + w]);
                }
            }
        }
        Self::new(out, self.labels.clone(), self.num_classes, self.split)
    }

    /// Mirrors the listed samples left-to-right in place.
    pub(crate) fn hflip_batch(images: &mut Tensor, flip: &[bool]) {
        let s = images.shape().to_vec();
        let (c, h, w) = (s[1], s[2], s[3]);
        for (i, _) in flip.iter().enumerate().filter(|(_, &f)| f) {
            let sample = &mut images.data_mut()[i * c * h * w..(i + 1) * c * h * w];
            for row in sample.chunks_mut(w) {
                row.reverse();
            }
        }
    }
}

/// Seeded permutation of `0..n`.
pub fn shuffled_indices(n: usize, seed: u64, label: &str) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_for(seed, label));
    idx
}

/// Mini-batches covering every sample exactly once, in a seeded per-epoch order.
pub fn epoch_batches(n: usize, batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let order = shuffled_indices(n, seed, &format!("epoch/{epoch}"));
    order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

/// Deterministic disjoint `(train, val)` partition with `round(N * val_fraction)`
/// validation samples. Both parts keep the original sample order.
pub fn split(dataset: &LabeledDataset, val_fraction: f64, seed: u64) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "validation fraction must be in (0, 1), got {val_fraction}"
        )));
    }
    let n = dataset.len();
    let n_val = (n as f64 * val_fraction).round() as usize;
    if n_val == 0 || n_val >= n {
        return Err(Error::InvalidArgument(format!(
            "validation fraction {val_fraction} of {n} samples leaves an empty split"
        )));
    }
    let perm = shuffled_indices(n, seed, "split");
    let mut val: Vec<usize> = perm[..n_val].to_vec();
    let mut train: Vec<usize> = perm[n_val..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    Ok((
        dataset.subset(&train).with_split(Split::Train),
        dataset.subset(&val).with_split(Split::Val),
    ))
}

/// Per-channel mean/std standardization fitted on one dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

impl Standardizer {
    pub fn fit(dataset: &LabeledDataset) -> Self {
        let [c, h, w] = dataset.sample_shape();
        let area = h * w;
        let mut sum = vec![0.0f64; c];
        let mut sq = vec![0.0f64; c];
        for (p, plane) in dataset.images().data().chunks(area.max(1)).enumerate() {
            let ch = p % c;
            for &v in plane {
                sum[ch] += f64::from(v);
                sq[ch] += f64::from(v) * f64::from(v);
            }
        }
        let count = (dataset.len() * area).max(1) as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / count).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(s, m)| ((s / count - m * m).max(0.0).sqrt().max(1e-6)) as f32)
            .collect();
        Standardizer {
            mean: mean.iter().map(|&m| m as f32).collect(),
            std,
        }
    }

    pub fn apply(&self, dataset: &LabeledDataset) -> Result<LabeledDataset> {
        let [c, h, w] = dataset.sample_shape();
        if c != self.mean.len() {
            return Err(Error::shape("standardizer channels", self.mean.len(), c));
        }
        let area = (h * w).max(1);
        let mut images = dataset.images().clone();
        for (p, plane) in images.data_mut().chunks_mut(area).enumerate() {
            let ch = p % c;
            plane.iter_mut().for_each(|v| *v = (*v - self.mean[ch]) / self.std[ch]);
        }
        LabeledDataset::new(images, dataset.labels().to_vec(), dataset.num_classes(), dataset.split())
    }
}
