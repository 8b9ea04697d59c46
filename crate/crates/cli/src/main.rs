//! `prunekit`: train, analyse, prune and compare CNNs from the command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or format error, 3 non-finite loss.

mod commands;
mod data;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use prunekit::model::Arch;

#[derive(Parser, Debug)]
#[command(name = "prunekit", version, about = "L1-norm structured filter pruning toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a built-in network and write a checkpoint.
    Train(TrainArgs),
    /// Per-layer sensitivity curves and filter-norm profiles.
    Sensitivity(SensitivityArgs),
    /// Write a greedy pruning plan from sensitivity curves.
    Plan(PlanArgs),
    /// Run an iterative prune-retrain session.
    Prune(PruneArgs),
    /// Per-layer parameter/FLOP report.
    Report(ReportArgs),
    /// Fine-tuned (Network-A) vs from-scratch (Network-B) pruning comparison.
    Compare(CompareArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Idx,
    Cifar10,
    Raw,
}

#[derive(Args, Debug, Serialize)]
pub struct DataArgs {
    /// Dataset directory.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "cifar10")]
    pub format: Format,
    /// Validation share when the dataset has no separate validation file.
    #[arg(long, default_value_t = 0.1)]
    pub val_fraction: f64,
    /// Use a seeded random subset of at most this many samples.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Per-channel standardization fitted on the training split.
    #[arg(long)]
    pub standardize: bool,
}

#[derive(Args, Debug, Serialize)]
pub struct ScheduleArgs {
    #[arg(long, default_value_t = 0.001)]
    pub lr: f64,
    #[arg(long, default_value_t = 40)]
    pub decay_every: usize,
    #[arg(long, default_value_t = 0.1)]
    pub decay_factor: f64,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    /// Random horizontal flips during training.
    #[arg(long)]
    pub hflip: bool,
}

#[derive(Args, Debug, Serialize)]
pub struct TrainArgs {
    #[arg(long, default_value = "vgg16")]
    pub arch: Arch,
    #[arg(long, default_value_t = 1.0)]
    pub width: f64,
    /// BatchNorm after every VGG conv.
    #[arg(long)]
    pub batchnorm: bool,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 1)]
    pub epochs: usize,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch history CSV (default: `<out>.history.csv`).
    #[arg(long)]
    pub history: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct SensitivityArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// `start:end:step` or a comma-separated list.
    #[arg(long, default_value = "0:0.9:0.1")]
    pub fractions: String,
    /// Evaluate on a seeded subset of this many validation samples.
    #[arg(long)]
    pub eval_samples: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory for `sensitivity.csv` and `norms.csv`.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct PlanArgs {
    #[command(flatten)]
    pub sweep: SensitivityArgs,
    /// Share of each layer's filters to request.
    #[arg(long, default_value_t = 0.5)]
    pub fraction: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct PruneArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// JSON array of `{"layer": ID, "m": N}` steps.
    #[arg(long)]
    pub plan: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 5)]
    pub retrain_epochs: usize,
    /// Allowed absolute accuracy drop.
    #[arg(long, default_value_t = 0.01)]
    pub budget: f64,
    /// Retraining learning rate.
    #[arg(long, default_value_t = 1e-5)]
    pub lr: f64,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    /// Label used in the summary CSV.
    #[arg(long, default_value = "network")]
    pub network: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Session log JSON (default: `<out>.log.json`).
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Summary CSV (default: `<out>.summary.csv`).
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct ReportArgs {
    /// Checkpoint to meter; otherwise a fresh `--arch` network is built.
    #[arg(long, conflicts_with_all = ["arch", "classes", "width", "batchnorm"])]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub arch: Option<Arch>,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub width: Option<f64>,
    #[arg(long)]
    pub batchnorm: bool,
    /// Input shape `CxHxW` (default: the checkpoint's, or 3x32x32).
    #[arg(long)]
    pub input: Option<String>,
    /// Output CSV (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct CompareArgs {
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long, value_enum, default_value = "idx")]
    pub source_format: Format,
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long, value_enum, default_value = "cifar10")]
    pub target_format: Format,
    #[arg(long, default_value = "vgg16")]
    pub arch: Arch,
    #[arg(long, default_value_t = 0.25)]
    pub width: f64,
    #[arg(long)]
    pub batchnorm: bool,
    /// Samples drawn from each dataset before splitting.
    #[arg(long, default_value_t = 16_000)]
    pub limit: usize,
    #[arg(long, default_value_t = 0.1)]
    pub val_fraction: f64,
    #[arg(long)]
    pub standardize: bool,
    #[arg(long, default_value_t = 20)]
    pub source_epochs: usize,
    #[arg(long, default_value_t = 20)]
    pub target_epochs: usize,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    #[arg(long, default_value_t = 5)]
    pub retrain_epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    pub budget: f64,
    /// Fixed plan for both networks; otherwise a greedy plan per network.
    #[arg(long)]
    pub plan: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    pub greedy_fraction: f64,
    #[arg(long, default_value = "0:0.9:0.1")]
    pub fractions: String,
    #[arg(long)]
    pub eval_samples: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(prunekit::Error),
}

impl From<prunekit::Error> for CliError {
    fn from(e: prunekit::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Core(prunekit::Error::InvalidArgument(_)) => 1,
            CliError::Core(prunekit::Error::NonFiniteLoss { .. }) => 3,
            CliError::Core(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "{msg}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn configure_threads() -> CliResult<()> {
    let Ok(value) = std::env::var("PRUNEKIT_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("PRUNEKIT_THREADS must be a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot configure thread pool: {e}")))
}

fn run(cli: Cli) -> CliResult<()> {
    configure_threads()?;
    match cli.command {
        Command::Train(a) => commands::train(&a),
        Command::Sensitivity(a) => commands::sensitivity(&a),
        Command::Plan(a) => commands::plan(&a),
        Command::Prune(a) => commands::prune(&a),
        Command::Report(a) => commands::report(&a),
        Command::Compare(a) => commands::compare(&a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
