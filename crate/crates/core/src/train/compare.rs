use std::fmt;

use serde::{Deserialize, Serialize};

use super::session::{run_prune_session, MeterSnapshot, PruneSessionConfig, SessionLog, SUMMARY_CSV_HEADER};
use super::{evaluate, train, TrainConfig, TrainHistory};
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::model::{build, Arch, BuildOptions, ModelGraph};
use crate::prune::PruneRequest;
use crate::rng::derive_seed;
use crate::sensitivity::{greedy_plan, sweep_all, SensitivityCurve};

/// Network-A is pre-trained on the source set and fine-tuned on the target;
/// Network-B is trained on the target from scratch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Modality {
    A,
    B,
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modality::A => "A",
            Modality::B => "B",
        })
    }
}

/// How each network's pruning plan is chosen. The same policy is applied to both.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", deny_unknown_fields)]
pub enum PlanPolicy {
    /// The same request list for both networks.
    Fixed { requests: Vec<PruneRequest> },
    /// Per-network sensitivity sweep, then [`greedy_plan`] at `fraction`.
    Greedy {
        fraction: f64,
        fractions: Vec<f64>,
        /// Validation samples used by the sweep (all when absent).
        eval_samples: Option<usize>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareConfig {
    pub arch: Arch,
    pub width: f64,
    pub batchnorm: bool,
    pub source_train: TrainConfig,
    /// Used for both Network-A fine-tuning and Network-B training.
    pub target_train: TrainConfig,
    /// `retrain_lr` and `baseline_accuracy` are overridden per network: the
    /// retrain rate is the last rate of `target_train`, the baseline is measured.
    pub session: PruneSessionConfig,
    pub policy: PlanPolicy,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct ModalityResult {
    pub modality: Modality,
    pub source_history: Option<TrainHistory>,
    pub history: TrainHistory,
    /// Trained, unpruned network.
    pub trained: ModelGraph,
    pub curves: Vec<SensitivityCurve>,
    pub plan: Vec<PruneRequest>,
    /// Network returned by the prune session.
    pub pruned: ModelGraph,
    pub log: SessionLog,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub network: String,
    pub params_m: f64,
    pub flops_m: f64,
    pub size_mb: f64,
}

impl CompareRow {
    fn new(network: String, m: MeterSnapshot) -> Self {
        CompareRow {
            network,
            params_m: m.params as f64 / 1e6,
            flops_m: m.flops as f64 / 1e6,
            size_mb: m.size_mb,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    /// Exactly `A-pruned` then `B-pruned`.
    pub rows: Vec<CompareRow>,
    pub unpruned: MeterSnapshot,
    pub a_baseline_accuracy: f64,
    pub b_baseline_accuracy: f64,
    pub a_final_accuracy: f64,
    pub b_final_accuracy: f64,
    pub a_phases: usize,
    pub b_phases: usize,
    /// Observation only: whether Network-A ended with fewer parameters than Network-B.
    pub a_prunes_further: bool,
    pub params_delta_m: f64,
    pub flops_delta_m: f64,
    pub size_delta_mb: f64,
}

impl CompareReport {
    fn new(a: &SessionLog, b: &SessionLog) -> Self {
        let (fa, fb) = (a.final_meter(), b.final_meter());
        let rows = vec![
            CompareRow::new("A-pruned".into(), fa),
            CompareRow::new("B-pruned".into(), fb),
        ];
        CompareReport {
            params_delta_m: rows[1].params_m - rows[0].params_m,
            flops_delta_m: rows[1].flops_m - rows[0].flops_m,
            size_delta_mb: rows[1].size_mb - rows[0].size_mb,
            rows,
            unpruned: a.baseline,
            a_baseline_accuracy: a.baseline_accuracy,
            b_baseline_accuracy: b.baseline_accuracy,
            a_final_accuracy: a.final_accuracy(),
            b_final_accuracy: b.final_accuracy(),
            a_phases: a.phases.len(),
            b_phases: b.phases.len(),
            a_prunes_further: fa.params < fb.params,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{SUMMARY_CSV_HEADER}\n");
        for r in &self.rows {
            out.push_str(&format!("{},{:.4},{:.4},{:.4}\n", r.network, r.params_m, r.flops_m, r.size_mb));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

struct Split<'a> {
    train: &'a LabeledDataset,
    val: &'a LabeledDataset,
}

fn run_modality(
    modality: Modality,
    source: Option<Split<'_>>,
    target: &Split<'_>,
    cfg: &CompareConfig,
) -> Result<ModalityResult> {
    let input = target.train.sample_shape();
    let classes = source.as_ref().map_or(target.train.num_classes(), |s| s.train.num_classes());
    let opts = BuildOptions {
        width: cfg.width,
        batchnorm: cfg.batchnorm,
        seed: derive_seed(cfg.seed, &format!("init/{modality}")),
    };
    let mut model = build(cfg.arch, input, classes, &opts)?;
    let mut source_history = None;
    if let Some(src) = source {
        let tc = TrainConfig {
            seed: derive_seed(cfg.seed, "train/source"),
            ..cfg.source_train.clone()
        };
        log::info!("Network-{modality}: pre-training on source");
        source_history = Some(train(&mut model, src.train, Some(src.val), &tc)?);
        model.replace_head(target.train.num_classes(), derive_seed(cfg.seed, "head"))?;
    }
    let tc = TrainConfig {
        seed: derive_seed(cfg.seed, "train/target"),
        ..cfg.target_train.clone()
    };
    log::info!("Network-{modality}: training on target");
    let history = train(&mut model, target.train, Some(target.val), &tc)?;
    let baseline = evaluate(&model, target.val)?;
    let (curves, plan) = match &cfg.policy {
        PlanPolicy::Fixed { requests } => (Vec::new(), requests.clone()),
        PlanPolicy::Greedy {
            fraction,
            fractions,
            eval_samples,
        } => {
            let eval = match eval_samples {
                Some(n) => target.val.sample(*n, derive_seed(cfg.seed, "sweep")),
                None => target.val.clone(),
            };
            let curves = sweep_all(&model, fractions, &eval)?;
            let plan = greedy_plan(&curves, *fraction)?;
            (curves, plan)
        }
    };
    let session = PruneSessionConfig {
        retrain_lr: tc.final_lr(),
        baseline_accuracy: Some(baseline),
        ..cfg.session.clone()
    };
    let (pruned, log) = run_prune_session(&model, &plan, target.train, target.val, &session, &modality.to_string())?;
    Ok(ModalityResult {
        modality,
        source_history,
        history,
        trained: model,
        curves,
        plan,
        pruned,
        log,
    })
}

/// Trains and prunes Network-A and Network-B under identical budgets and
/// policies. Source and target images must share one `(C, H, W)` shape.
pub fn compare_modalities(
    source: (&LabeledDataset, &LabeledDataset),
    target: (&LabeledDataset, &LabeledDataset),
    cfg: &CompareConfig,
) -> Result<(ModalityResult, ModalityResult, CompareReport)> {
    let shapes = [source.0, source.1, target.0, target.1].map(LabeledDataset::sample_shape);
    if shapes.iter().any(|s| *s != shapes[2]) {
        return Err(Error::InvalidArgument(format!(
            "source and target image shapes differ: {:?}",
            shapes
        )));
    }
    let target_split = Split {
        train: target.0,
        val: target.1,
    };
    let (a, b) = rayon::join(
        || {
            let src = Split {
                train: source.0,
                val: source.1,
            };
            run_modality(Modality::A, Some(src), &target_split, cfg)
        },
        || run_modality(Modality::B, None, &target_split, cfg),
    );
    let (a, b) = (a?, b?);
    let report = CompareReport::new(&a.log, &b.log);
    Ok((a, b, report))
}
