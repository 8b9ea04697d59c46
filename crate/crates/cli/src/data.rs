use std::path::{Path, PathBuf};

use prunekit::data::{
    load_cifar10_bin, load_idx_dir, load_raw_dir, split, LabeledDataset, Split, Standardizer,
};
use prunekit::rng::derive_seed;

use crate::{CliResult, DataArgs, Format};

/// Train and validation splits plus the files they were read from.
pub struct Loaded {
    pub train: LabeledDataset,
    pub val: LabeledDataset,
    pub files: Vec<PathBuf>,
}

fn existing(dir: &Path, names: &[&str]) -> Vec<PathBuf> {
    names.iter().map(|n| dir.join(n)).filter(|p| p.is_file()).collect()
}

/// Reads the training portion of a dataset directory. Raw directories may
/// also carry a validation file.
pub fn read_dir(dir: &Path, format: Format) -> CliResult<(LabeledDataset, Option<LabeledDataset>, Vec<PathBuf>)> {
    Ok(match format {
        Format::Idx => {
            let ds = load_idx_dir(dir, Split::Train)?;
            let files = existing(dir, &["train-images-idx3-ubyte", "train-labels-idx1-ubyte"]);
            (ds, None, files)
        }
        Format::Cifar10 => {
            let ds = load_cifar10_bin(dir)?;
            let names: Vec<String> = (1..=5).map(|i| format!("data_batch_{i}.bin")).collect();
            let refs: Vec<&str> = names.iter().map(String::as_str).collect();
            (ds, None, existing(dir, &refs))
        }
        Format::Raw => {
            let (tr, va) = load_raw_dir(dir)?;
            (tr, va, existing(dir, &["train.pkds", "val.pkds"]))
        }
    })
}

/// Shape every dataset is adapted to when no model fixes it: three channels,
/// at least 32x32.
pub fn default_shape(ds: &LabeledDataset) -> [usize; 3] {
    let [_, h, w] = ds.sample_shape();
    [3, h.max(32), w.max(32)]
}

pub struct LoadOptions {
    pub val_fraction: f64,
    pub limit: Option<usize>,
    pub standardize: bool,
    pub seed: u64,
    /// Defaults to [`default_shape`] of the training data.
    pub shape: Option<[usize; 3]>,
}

impl LoadOptions {
    pub fn from_args(args: &DataArgs, seed: u64, shape: Option<[usize; 3]>) -> Self {
        LoadOptions {
            val_fraction: args.val_fraction,
            limit: args.limit,
            standardize: args.standardize,
            seed,
            shape,
        }
    }
}

pub fn load(dir: &Path, format: Format, opts: &LoadOptions) -> CliResult<Loaded> {
    let (mut train, val, files) = read_dir(dir, format)?;
    if let Some(n) = opts.limit {
        train = train.sample(n, derive_seed(opts.seed, "limit"));
    }
    let (train, val) = match val {
        Some(v) => (train, v),
        None => split(&train, opts.val_fraction, opts.seed)?,
    };
    let shape = opts.shape.unwrap_or_else(|| default_shape(&train));
    let (mut train, mut val) = (train.adapt_to(shape)?, val.adapt_to(shape)?);
    if opts.standardize {
        let s = Standardizer::fit(&train);
        train = s.apply(&train)?;
        val = s.apply(&val)?;
    }
    log::info!(
        "loaded {} ({} train / {} val, {} classes, shape {:?})",
        dir.display(),
        train.len(),
        val.len(),
        train.num_classes(),
        shape
    );
    Ok(Loaded { train, val, files })
}

pub fn load_args(args: &DataArgs, seed: u64, shape: Option<[usize; 3]>) -> CliResult<Loaded> {
    load(&args.data, args.format, &LoadOptions::from_args(args, seed, shape))
}
