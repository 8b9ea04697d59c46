//! Seeded synthetic image sets in the canonical MNIST and CIFAR-10 byte layouts,
//! used as stand-ins when the real files are not available.

use rand::Rng as _;

use super::{LabeledDataset, Split};
use crate::error::Result;
use crate::rng::rng_for;

// Segment order: top, upper-left, upper-right, middle, lower-left, lower-right, bottom.
const SEGMENTS: [[bool; 7]; 10] = [
    [true, true, true, false, true, true, true],
    [false, false, true, false, false, true, false],
    [true, false, true, true, true, false, true],
    [true, false, true, true, false, true, true],
    [false, true, true, true, false, true, false],
    [true, true, false, true, false, true, true],
    [true, true, false, true, true, true, true],
    [true, false, true, false, false, true, false],
    [true, true, true, true, true, true, true],
    [true, true, true, true, false, true, true],
];

/// Seven-segment digits on a 28x28 canvas with random offset, stroke width
/// and noise. Returns `(pixels, labels)` in IDX order.
pub fn digits(n: usize, seed: u64) -> (Vec<u8>, Vec<u8>) {
    let mut rng = rng_for(seed, "synthetic/digits");
    let mut pixels = vec![0u8; n * 28 * 28];
    let mut labels = Vec::with_capacity(n);
    for img in pixels.chunks_mut(28 * 28) {
        let label = rng.gen_range(0..10u8);
        labels.push(label);
        let (ox, oy) = (rng.gen_range(4..=10usize), rng.gen_range(2..=6usize));
        let (w, h, t) = (rng.gen_range(8..=12usize), rng.gen_range(7..=9usize), rng.gen_range(2..=3usize));
        let mut stroke = |x0: usize, y0: usize, x1: usize, y1: usize| {
            for y in y0..=y1 {
                for x in x0..=x1 {
                    if x < 28 && y < 28 {
                        img[y * 28 + x] = 255;
                    }
                }
            }
        };
        let seg = SEGMENTS[usize::from(label)];
        let (x0, x1, y0, y1, y2) = (ox, ox + w, oy, oy + h, oy + 2 * h);
        if seg[0] { stroke(x0, y0, x1, y0 + t - 1) }
        if seg[1] { stroke(x0, y0, x0 + t - 1, y1) }
        if seg[2] { stroke(x1 - t + 1, y0, x1, y1) }
        if seg[3] { stroke(x0, y1, x1, y1 + t - 1) }
        if seg[4] { stroke(x0, y1, x0 + t - 1, y2) }
        if seg[5] { stroke(x1 - t + 1, y1, x1, y2) }
        if seg[6] { stroke(x0, y2, x1, y2 + t - 1) }
        for p in img.iter_mut() {
            let noise: i16 = rng.gen_range(-30..=30);
            *p = (i16::from(*p) + noise).clamp(0, 255) as u8;
        }
    }
    (pixels, labels)
}

/// Colour-and-texture classes on 3x32x32 images: each class has its own hue
/// and stripe orientation/frequency, with random phase, contrast and noise.
/// Returns `(pixels, labels)` in CIFAR-10 record order.
pub fn textures(n: usize, seed: u64) -> (Vec<u8>, Vec<u8>) {
    let mut rng = rng_for(seed, "synthetic/textures");
    let mut pixels = vec![0u8; n * 3 * 32 * 32];
    let mut labels = Vec::with_capacity(n);
    for img in pixels.chunks_mut(3 * 32 * 32) {
        let label = rng.gen_range(0..10u8);
        labels.push(label);
        let c = f32::from(label);
        let angle = c * std::f32::consts::PI / 10.0;
        let freq = 0.35 + 0.08 * (c % 3.0);
        let phase: f32 = rng.gen_range(0.0..std::f32::consts::TAU);
        let contrast: f32 = rng.gen_range(0.25..0.45);
        let hue = [
            0.5 + 0.3 * (c * 0.7).sin(),
            0.5 + 0.3 * (c * 1.3 + 1.0).sin(),
            0.5 + 0.3 * (c * 2.1 + 2.0).sin(),
        ];
        let (sa, ca) = angle.sin_cos();
        for (ch, plane) in img.chunks_mut(32 * 32).enumerate() {
            for (i, p) in plane.iter_mut().enumerate() {
                let (x, y) = ((i % 32) as f32, (i / 32) as f32);
                let wave = (freq * (x * ca + y * sa) + phase).sin();
                let noise: f32 = rng.gen_range(-0.1..0.1);
                let v = hue[ch] + contrast * wave + noise;
                *p = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
            }
        }
    }
    (pixels, labels)
}

/// A small two-class set: class 0 is brighter in the left half, class 1 in the right.
pub fn halves(n: usize, shape: [usize; 3], seed: u64) -> Result<LabeledDataset> {
    let mut rng = rng_for(seed, "synthetic/halves");
    let [c, h, w] = shape;
    let mut pixels = vec![0u8; n * c * h * w];
    let mut labels = Vec::with_capacity(n);
    for img in pixels.chunks_mut((c * h * w).max(1)) {
        let label = rng.gen_range(0..2usize);
        labels.push(label);
        for (i, p) in img.iter_mut().enumerate() {
            let left = (i % w) < w / 2;
            let base: u8 = if left == (label == 0) { 170 } else { 60 };
            *p = base.saturating_add(rng.gen_range(0..60));
        }
    }
    LabeledDataset::from_u8([n, c, h, w], &pixels, labels, 2, Split::Train)
}

/// Digits as a dataset of `(N, 1, 28, 28)` images.
pub fn digits_dataset(n: usize, seed: u64) -> Result<LabeledDataset> {
    let (p, l) = digits(n, seed);
    LabeledDataset::from_u8([n, 1, 28, 28], &p, l.into_iter().map(usize::from).collect(), 10, Split::Train)
}

/// Textures as a dataset of `(N, 3, 32, 32)` images.
pub fn textures_dataset(n: usize, seed: u64) -> Result<LabeledDataset> {
    let (p, l) = textures(n, seed);
    LabeledDataset::from_u8([n, 3, 32, 32], &p, l.into_iter().map(usize::from).collect(), 10, Split::Train)
}
