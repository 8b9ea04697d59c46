use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{evaluate, train, TrainConfig};
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::meter::meter_model;
use crate::model::ModelGraph;
use crate::prune::{prune_filters, resolve_step, PruneRequest, PruningStep};

pub const SUMMARY_CSV_HEADER: &str = "network,params_m,flops_m,size_mb";

// Absorbs rounding in `baseline - budget` for accuracies that are exact ratios.
const ACCURACY_SLACK: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PruneSessionConfig {
    pub retrain_epochs: usize,
    /// Retraining learning rate, normally the lowest rate reached in baseline training.
    pub retrain_lr: f64,
    /// Allowed absolute drop from the baseline accuracy.
    pub budget: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Baseline accuracy; measured on the validation set when absent.
    pub baseline_accuracy: Option<f64>,
}

impl Default for PruneSessionConfig {
    fn default() -> Self {
        PruneSessionConfig {
            retrain_epochs: 5,
            retrain_lr: 1e-5,
            budget: 0.01,
            batch_size: 64,
            seed: 0,
            baseline_accuracy: None,
        }
    }
}

impl PruneSessionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.budget.is_nan() || self.budget < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "accuracy budget must be non-negative, got {}",
                self.budget
            )));
        }
        self.retrain_config(0).validate()
    }

    fn retrain_config(&self, phase: usize) -> TrainConfig {
        TrainConfig {
            lr: self.retrain_lr,
            decay_factor: 1.0,
            decay_every: usize::MAX,
            epochs: self.retrain_epochs,
            batch_size: self.batch_size,
            seed: crate::rng::derive_seed(self.seed, &format!("retrain/{phase}")),
            ..TrainConfig::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeterSnapshot {
    pub params: u64,
    pub flops: u64,
    pub size_mb: f64,
}

impl MeterSnapshot {
    pub fn of(model: &ModelGraph) -> Result<Self> {
        let r = meter_model(model)?;
        Ok(MeterSnapshot {
            params: r.total_params,
            flops: r.total_flops,
            size_mb: r.size_mb,
        })
    }

    pub fn csv_row(&self, network: &str) -> String {
        format!(
            "{network},{:.4},{:.4},{:.4}",
            self.params as f64 / 1e6,
            self.flops as f64 / 1e6,
            self.size_mb
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseRecord {
    pub phase: usize,
    pub step: PruningStep,
    pub val_accuracy: f64,
    pub meter: MeterSnapshot,
    /// Not serialized, so logs of identical runs compare byte-for-byte.
    #[serde(skip)]
    pub wall_time_s: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TerminalReason {
    PlanComplete,
    BudgetExhausted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionLog {
    pub network: String,
    pub baseline_accuracy: f64,
    pub budget: f64,
    pub baseline: MeterSnapshot,
    /// Committed phases, in order.
    pub phases: Vec<PhaseRecord>,
    /// The phase that broke the budget and was rolled back, if any.
    pub rejected: Option<PhaseRecord>,
    pub terminal: TerminalReason,
}

impl SessionLog {
    /// Metering of the returned model.
    pub fn final_meter(&self) -> MeterSnapshot {
        self.phases.last().map_or(self.baseline, |p| p.meter)
    }

    pub fn final_accuracy(&self) -> f64 {
        self.phases.last().map_or(self.baseline_accuracy, |p| p.val_accuracy)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("session log serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Two rows: the unpruned network and its pruned result.
    pub fn to_csv(&self) -> String {
        format!(
            "{SUMMARY_CSV_HEADER}\n{}\n{}\n",
            self.baseline.csv_row(&self.network),
            self.final_meter().csv_row(&format!("{}-pruned", self.network))
        )
    }

    pub fn total_wall_time_s(&self) -> f64 {
        self.phases.iter().chain(&self.rejected).map(|p| p.wall_time_s).sum()
    }
}

/// Iterative prune-retrain. Each request is resolved against the current
/// model, applied, retrained and evaluated; a phase whose accuracy falls
/// below `baseline - budget` is rolled back and ends the session.
pub fn run_prune_session(
    model: &ModelGraph,
    requests: &[PruneRequest],
    train_set: &LabeledDataset,
    val_set: &LabeledDataset,
    cfg: &PruneSessionConfig,
    network: &str,
) -> Result<(ModelGraph, SessionLog)> {
    cfg.validate()?;
    let baseline_accuracy = match cfg.baseline_accuracy {
        Some(a) => a,
        None => evaluate(model, val_set)?,
    };
    let mut log = SessionLog {
        network: network.to_string(),
        baseline_accuracy,
        budget: cfg.budget,
        baseline: MeterSnapshot::of(model)?,
        phases: Vec::new(),
        rejected: None,
        terminal: TerminalReason::PlanComplete,
    };
    let threshold = baseline_accuracy - cfg.budget - ACCURACY_SLACK;
    let mut committed = model.clone();
    for (phase, request) in requests.iter().enumerate() {
        let started = Instant::now();
        let step = resolve_step(&committed, request).map_err(|e| e.at_plan_step(phase))?;
        let mut candidate = prune_filters(&committed, &step)?;
        train(&mut candidate, train_set, None, &cfg.retrain_config(phase))?;
        let val_accuracy = evaluate(&candidate, val_set)?;
        let record = PhaseRecord {
            phase,
            step,
            val_accuracy,
            meter: MeterSnapshot::of(&candidate)?,
            wall_time_s: started.elapsed().as_secs_f64(),
        };
        log::info!(
            "{network} phase {phase}: prune {} x{} -> val acc {val_accuracy:.4} (floor {:.4}), {} params",
            record.step.layer,
            record.step.m,
            threshold.max(0.0),
            record.meter.params
        );
        if val_accuracy < threshold {
            log.rejected = Some(record);
            log.terminal = TerminalReason::BudgetExhausted;
            break;
        }
        log.phases.push(record);
        committed = candidate;
    }
    Ok((committed, log))
}
