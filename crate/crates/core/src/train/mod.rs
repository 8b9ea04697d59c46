//! Training loop, evaluation, the prune-retrain controller and the
//! fine-tuned vs from-scratch comparison harness.

mod compare;
mod optim;
mod session;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

pub use compare::{compare_modalities, CompareConfig, CompareReport, CompareRow, Modality, ModalityResult, PlanPolicy};
pub use optim::{Adam, AdamParams, StepDecay};
pub use session::{
    run_prune_session, MeterSnapshot, PhaseRecord, PruneSessionConfig, SessionLog, TerminalReason,
    SUMMARY_CSV_HEADER,
};

use crate::data::{epoch_batches, LabeledDataset};
use crate::error::{Error, Result};
use crate::model::ModelGraph;
use crate::rng::rng_for;
use crate::tape::{argmax_rows, CrossEntropy, GradientTape};

pub const EVAL_BATCH: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub decay_factor: f64,
    pub decay_every: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamParams,
    pub seed: u64,
    /// Random horizontal flips of training batches.
    pub hflip: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.001,
            decay_factor: 0.1,
            decay_every: 40,
            epochs: 1,
            batch_size: 64,
            adam: AdamParams::default(),
            seed: 0,
            hflip: false,
        }
    }
}

impl TrainConfig {
    pub fn schedule(&self) -> StepDecay {
        StepDecay {
            lr0: self.lr,
            factor: self.decay_factor,
            period: self.decay_every,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.lr));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return bad(format!("decay factor must be in (0, 1], got {}", self.decay_factor));
        }
        if self.decay_every == 0 {
            return bad("decay period must be at least 1 epoch".into());
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        Ok(())
    }

    /// Learning rate used in the last trained epoch (`lr` itself for 0 epochs).
    pub fn final_lr(&self) -> f64 {
        self.schedule().lr_at(self.epochs.saturating_sub(1))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_accuracy: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub const CSV_HEADER: &'static str = "epoch,lr,train_loss,train_accuracy,val_accuracy";

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for e in &self.epochs {
            let val = e.val_accuracy.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                e.epoch, e.lr, e.train_loss, e.train_accuracy, val
            ));
        }
        out
    }
}

fn check_compatible(model: &ModelGraph, data: &LabeledDataset) -> Result<()> {
    if data.sample_shape() != model.input_shape() {
        return Err(Error::shape(
            "dataset sample shape",
            model.input_shape(),
            data.sample_shape(),
        ));
    }
    if data.num_classes() > model.num_classes() {
        return Err(Error::InvalidArgument(format!(
            "dataset has {} classes but the model predicts {}",
            data.num_classes(),
            model.num_classes()
        )));
    }
    Ok(())
}

/// Trains `model` in place for `cfg.epochs` epochs with Adam and step decay.
pub fn train(
    model: &mut ModelGraph,
    data: &LabeledDataset,
    val: Option<&LabeledDataset>,
    cfg: &TrainConfig,
) -> Result<TrainHistory> {
    cfg.validate()?;
    if cfg.epochs == 0 {
        return Ok(TrainHistory::default());
    }
    if data.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    check_compatible(model, data)?;
    let schedule = cfg.schedule();
    let mut adam = Adam::new(model, cfg.adam);
    let mut tape = GradientTape::new(model);
    let mut history = TrainHistory::default();
    for epoch in 0..cfg.epochs {
        let lr = schedule.lr_at(epoch);
        let mut flip_rng = rng_for(cfg.seed, &format!("hflip/{epoch}"));
        let (mut loss_sum, mut correct) = (0.0f64, 0usize);
        let batches = epoch_batches(data.len(), cfg.batch_size, cfg.seed, epoch);
        for (b, idx) in batches.iter().enumerate() {
            let (mut images, labels) = data.batch(idx);
            if cfg.hflip {
                let flips: Vec<bool> = idx.iter().map(|_| flip_rng.gen_bool(0.5)).collect();
                LabeledDataset::hflip_batch(&mut images, &flips);
            }
            tape.reset();
            let logits = model.forward_train(&images, &mut tape)?;
            let loss = CrossEntropy::new(&logits, &labels)?;
            if !loss.value.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            loss_sum += f64::from(loss.value) * idx.len() as f64;
            correct += loss.correct();
            tape.backward_loss(model, &loss)?;
            adam.step(model, tape.grads(), lr)?;
        }
        let val_accuracy = val.map(|v| evaluate(model, v)).transpose()?;
        let record = EpochRecord {
            epoch,
            lr,
            train_loss: loss_sum / data.len() as f64,
            train_accuracy: correct as f64 / data.len() as f64,
            val_accuracy,
        };
        log::info!(
            "epoch {epoch}: lr {lr:e} loss {:.4} train acc {:.4}{}",
            record.train_loss,
            record.train_accuracy,
            val_accuracy.map(|v| format!(" val acc {v:.4}")).unwrap_or_default()
        );
        history.epochs.push(record);
    }
    Ok(history)
}

/// Predicted class of every sample, in dataset order.
pub fn predict(model: &ModelGraph, data: &LabeledDataset) -> Result<Vec<usize>> {
    if data.sample_shape() != model.input_shape() {
        return Err(Error::shape(
            "dataset sample shape",
            model.input_shape(),
            data.sample_shape(),
        ));
    }
    let mut out = Vec::with_capacity(data.len());
    let all: Vec<usize> = (0..data.len()).collect();
    for idx in all.chunks(EVAL_BATCH) {
        let (images, _) = data.batch(idx);
        let logits = model.forward(&images)?;
        out.extend(argmax_rows(&logits));
    }
    Ok(out)
}

/// Fraction of samples whose argmax prediction equals the label.
pub fn evaluate(model: &ModelGraph, data: &LabeledDataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("evaluation set is empty".into()));
    }
    let correct = predict(model, data)?
        .iter()
        .zip(data.labels())
        .filter(|(p, l)| p == l)
        .count();
    Ok(correct as f64 / data.len() as f64)
}
