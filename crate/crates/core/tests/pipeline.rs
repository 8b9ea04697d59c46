use proptest::prelude::*;
use prunekit::data::{split, synthetic, LabeledDataset, Split};
use prunekit::meter::meter_model;
use prunekit::model::{Arch, ModelBuilder, ModelGraph};
use prunekit::prune::{compute_norm_profile, PruneRequest};
use prunekit::sensitivity::{
    default_fractions, greedy_plan, norm_report, sensitivity_csv, sweep_all, sweep_layer,
};
use prunekit::train::{
    compare_modalities, evaluate, predict, run_prune_session, train, CompareConfig, PlanPolicy,
    PruneSessionConfig, StepDecay, TerminalReason, TrainConfig,
};
use prunekit::{Error, Tensor};

/// Two conv layers of `4 * widen` filters on 1x8x8 inputs.
fn toy_cnn(widen: usize, seed: u64) -> ModelGraph {
    let w = 4 * widen;
    ModelBuilder::new([1, 8, 8])
        .conv("conv1", w, 3, 1, 1, true)
        .relu("relu1")
        .maxpool("pool1")
        .conv("conv2", w, 3, 1, 1, true)
        .relu("relu2")
        .global_avg_pool("gap")
        .dense("fc", 2)
        .build(2, seed)
        .unwrap()
}

fn toy_data(seed: u64) -> (LabeledDataset, LabeledDataset) {
    let d = synthetic::halves(240, [1, 8, 8], seed).unwrap();
    split(&d, 0.25, seed).unwrap()
}

fn trained_toy() -> (ModelGraph, LabeledDataset, LabeledDataset) {
    let (tr, va) = toy_data(1);
    let mut m = toy_cnn(4, 2);
    let cfg = TrainConfig {
        epochs: 10,
        batch_size: 16,
        lr: 0.01,
        ..Default::default()
    };
    train(&mut m, &tr, Some(&va), &cfg).unwrap();
    (m, tr, va)
}

#[test]
fn zero_epochs_leave_model_unchanged() {
    let (tr, _) = toy_data(0);
    let mut m = toy_cnn(1, 0);
    let before = m.clone();
    let h = train(&mut m, &tr, None, &TrainConfig { epochs: 0, ..Default::default() }).unwrap();
    assert!(h.epochs.is_empty());
    assert_eq!(m, before);
}

#[test]
fn separable_toy_reaches_full_train_accuracy() {
    let (tr, _) = toy_data(3);
    let mut m = toy_cnn(1, 5);
    let cfg = TrainConfig {
        epochs: 50,
        batch_size: 16,
        lr: 0.01,
        ..Default::default()
    };
    let mut reached = false;
    for epoch in 0..cfg.epochs {
        let one = TrainConfig { epochs: 1, seed: epoch as u64, ..cfg.clone() };
        train(&mut m, &tr, None, &one).unwrap();
        if evaluate(&m, &tr).unwrap() == 1.0 {
            reached = true;
            break;
        }
    }
    assert!(reached);
}

#[test]
fn training_is_deterministic() {
    let (tr, va) = toy_data(0);
    let cfg = TrainConfig { epochs: 2, batch_size: 8, hflip: true, ..Default::default() };
    let run = || {
        let mut m = toy_cnn(1, 1);
        let h = train(&mut m, &tr, Some(&va), &cfg).unwrap();
        (m.checksum(), h)
    };
    assert_eq!(run(), run());
}

#[test]
fn nan_loss_names_epoch_and_batch() {
    let (tr, _) = toy_data(0);
    let mut m = toy_cnn(1, 0);
    m.param_data_mut("fc", "bias").unwrap()[0] = f32::NAN;
    let err = train(&mut m, &tr, None, &TrainConfig::default()).unwrap_err();
    assert!(matches!(err, Error::NonFiniteLoss { epoch: 0, batch: 0 }), "{err}");
}

#[test]
fn evaluate_matches_per_sample_oracle() {
    let (m, _, va) = trained_toy();
    let acc = evaluate(&m, &va).unwrap();
    let mut correct = 0;
    for i in 0..va.len() {
        let (x, y) = va.batch(&[i]);
        let out = m.forward(&x).unwrap();
        let d = out.data();
        let pred = if d[1] > d[0] { 1 } else { 0 };
        correct += usize::from(pred == y[0]);
    }
    assert_eq!(acc, correct as f64 / va.len() as f64);
    let preds = predict(&m, &va).unwrap();
    let right = LabeledDataset::new(va.images().clone(), preds.clone(), 2, Split::Val).unwrap();
    assert_eq!(evaluate(&m, &right.take(1)).unwrap(), 1.0);
    let wrong = LabeledDataset::new(va.images().clone(), preds.iter().map(|p| 1 - p).collect(), 2, Split::Val).unwrap();
    assert_eq!(evaluate(&m, &wrong).unwrap(), 0.0);
    assert!(evaluate(&m, &va.take(0)).is_err());
    let other = synthetic::halves(4, [1, 6, 6], 0).unwrap();
    assert!(matches!(evaluate(&m, &other), Err(Error::Shape { .. })));
}

proptest! {
    #[test]
    fn schedule_closed_form(epoch in 0usize..10_000, period in 1usize..100, lr0 in 1e-6f64..1.0) {
        let s = StepDecay { lr0, factor: 0.1, period };
        let expected = lr0 * 0.1f64.powi((epoch / period) as i32);
        prop_assert!((s.lr_at(epoch) - expected).abs() <= expected * 1e-12);
    }
}

#[test]
fn schedule_example() {
    let s = TrainConfig::default().schedule();
    assert!((s.lr_at(85) - 1e-5).abs() < 1e-18);
}

fn session_cfg(budget: f64, retrain: usize) -> PruneSessionConfig {
    PruneSessionConfig {
        retrain_epochs: retrain,
        retrain_lr: 0.001,
        budget,
        batch_size: 16,
        ..Default::default()
    }
}

#[test]
fn empty_plan_is_a_no_op() {
    let (m, tr, va) = trained_toy();
    let (out, log) = run_prune_session(&m, &[], &tr, &va, &session_cfg(0.01, 1), "B").unwrap();
    assert_eq!(out, m);
    assert_eq!(log.terminal, TerminalReason::PlanComplete);
    assert!(log.phases.is_empty());
    assert_eq!(log.final_meter(), log.baseline);
}

#[test]
fn unbounded_budget_applies_every_step() {
    let (m, tr, va) = trained_toy();
    let plan = [PruneRequest::new("conv2", 15), PruneRequest::new("conv1", 15)];
    let (out, log) = run_prune_session(&m, &plan, &tr, &va, &session_cfg(1.0, 0), "A").unwrap();
    assert_eq!(log.phases.len(), 2);
    assert_eq!(out.layer("conv1").unwrap().filters(), 1);
    assert_eq!(log.final_meter().params, meter_model(&out).unwrap().total_params);
}

#[test]
fn greedy_session_keeps_budget_and_rolls_back() {
    let (m, tr, va) = trained_toy();
    let baseline = evaluate(&m, &va).unwrap();
    assert!(baseline >= 0.99, "{baseline}");
    let curves = sweep_all(&m, &default_fractions(), &va).unwrap();
    let plan = greedy_plan(&curves, 0.5).unwrap();
    assert_eq!(plan.len(), 2);
    let (out, log) = run_prune_session(&m, &plan, &tr, &va, &session_cfg(0.01, 2), "B").unwrap();
    assert_eq!(log.terminal, TerminalReason::PlanComplete);
    let mut prev = log.baseline.params;
    for p in &log.phases {
        assert!(p.val_accuracy >= baseline - 0.01);
        assert!(p.meter.params < prev);
        prev = p.meter.params;
    }
    assert_eq!(log.final_meter().params, meter_model(&out).unwrap().total_params);

    // An all-but-one prune without retraining cannot hold the baseline exactly.
    let forced = [PruneRequest::new("conv1", 8), PruneRequest::new("conv2", 15)];
    let (rolled, log) = run_prune_session(&m, &forced, &tr, &va, &session_cfg(0.0, 0), "B").unwrap();
    assert_eq!(log.terminal, TerminalReason::BudgetExhausted);
    let rejected = log.rejected.as_ref().unwrap();
    assert!(rejected.val_accuracy < baseline);
    let expected = log.final_meter();
    let got = meter_model(&rolled).unwrap();
    assert_eq!((got.total_params, got.total_flops), (expected.params, expected.flops));
    let json = log.to_json();
    assert_eq!(prunekit::train::SessionLog::from_json(&json).unwrap().to_json(), json);
}

#[test]
fn vanished_layer_rejected() {
    let (m, tr, va) = trained_toy();
    let err = run_prune_session(&m, &[PruneRequest::new("conv9", 1)], &tr, &va, &session_cfg(1.0, 0), "A")
        .unwrap_err();
    assert!(err.to_string().contains("conv9"));
}

#[test]
fn sweeps_do_not_mutate_and_are_deterministic() {
    let (m, _, va) = trained_toy();
    let sum = m.checksum();
    let base = evaluate(&m, &va).unwrap();
    let c1 = sweep_layer(&m, "conv1", &[0.0, 0.01, 0.5], &va).unwrap();
    assert_eq!(m.checksum(), sum);
    assert_eq!(c1.points[0].accuracy, base);
    assert_eq!(c1.points[1].accuracy, base);
    assert_eq!(c1, sweep_layer(&m, "conv1", &[0.0, 0.01, 0.5], &va).unwrap());
    assert!(sweep_layer(&m, "conv1", &[0.0], &va.take(0)).is_err());
    assert!(sweep_layer(&m, "fc", &[0.0], &va).is_err());
    let csv = sensitivity_csv(&[c1]);
    assert_eq!(csv.lines().next(), Some("layer_id,fraction,accuracy"));
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn zeroed_filters_leave_accuracy_flat() {
    let m0 = ModelBuilder::new([1, 8, 8])
        .conv("conv1", 8, 3, 1, 1, false)
        .relu("relu1")
        .global_avg_pool("gap")
        .dense("fc", 2)
        .build(2, 3)
        .unwrap();
    let (tr, va) = toy_data(2);
    let mut m = m0;
    train(&mut m, &tr, None, &TrainConfig { epochs: 5, lr: 0.01, batch_size: 16, ..Default::default() }).unwrap();
    let w = m.param_data_mut("conv1", "weight").unwrap();
    w[..4 * 9].iter_mut().for_each(|v| *v = 0.0);
    let curve = sweep_layer(&m, "conv1", &[0.0, 0.125, 0.25, 0.375, 0.5], &va).unwrap();
    let accs: Vec<f64> = curve.points.iter().map(|p| p.accuracy).collect();
    assert!(accs.iter().all(|&a| a == accs[0]), "{accs:?}");
}

#[test]
fn norm_report_matches_engine() {
    let (m, _, _) = trained_toy();
    for e in norm_report(&m).unwrap() {
        assert_eq!(e.profile, compute_norm_profile(&m, &e.profile.layer_id).unwrap());
        assert_eq!(e.normalized.last().copied(), Some(1.0));
        assert!(e.normalized.windows(2).all(|w| w[0] <= w[1]));
    }
    let mut z = toy_cnn(1, 0);
    for id in ["conv1", "conv2"] {
        z.param_data_mut(id, "weight").unwrap().iter_mut().for_each(|v| *v = 0.0);
    }
    for e in norm_report(&z).unwrap() {
        assert!(e.profile.norms().iter().chain(&e.normalized).all(|&v| v == 0.0));
    }
}

fn tiny_compare(policy: PlanPolicy) -> CompareConfig {
    let tc = TrainConfig { epochs: 1, batch_size: 16, ..Default::default() };
    CompareConfig {
        arch: Arch::Vgg16,
        width: 0.0625,
        batchnorm: true,
        source_train: tc.clone(),
        target_train: tc,
        session: session_cfg(0.05, 1),
        policy,
        seed: 7,
    }
}

#[test]
fn compare_produces_paired_reproducible_logs() {
    let src = synthetic::digits_dataset(60, 1).unwrap().adapt_to([3, 32, 32]).unwrap();
    let tgt = synthetic::textures_dataset(60, 2).unwrap();
    let (s_tr, s_va) = split(&src, 0.25, 0).unwrap();
    let (t_tr, t_va) = split(&tgt, 0.25, 0).unwrap();
    let cfg = tiny_compare(PlanPolicy::Greedy {
        fraction: 0.5,
        fractions: vec![0.0, 0.5],
        eval_samples: Some(10),
    });
    let (a, b, report) = compare_modalities((&s_tr, &s_va), (&t_tr, &t_va), &cfg).unwrap();
    assert!(a.source_history.is_some() && b.source_history.is_none());
    let names: Vec<&str> = report.rows.iter().map(|r| r.network.as_str()).collect();
    assert_eq!(names, ["A-pruned", "B-pruned"]);
    let csv = report.to_csv();
    assert_eq!(csv.lines().next(), Some("network,params_m,flops_m,size_mb"));
    assert_eq!(csv.lines().count(), 3);
    let (a2, b2, report2) = compare_modalities((&s_tr, &s_va), (&t_tr, &t_va), &cfg).unwrap();
    assert_eq!(a.log.to_json(), a2.log.to_json());
    assert_eq!(b.log.to_json(), b2.log.to_json());
    assert_eq!(report.to_json(), report2.to_json());
    assert_eq!(a.pruned.checksum(), a2.pruned.checksum());

    let bad = synthetic::halves(8, [3, 16, 16], 0).unwrap();
    assert!(compare_modalities((&bad, &bad), (&t_tr, &t_va), &cfg).is_err());
}

#[test]
fn compare_with_source_equal_to_target() {
    let tgt = synthetic::textures_dataset(40, 2).unwrap();
    let (t_tr, t_va) = split(&tgt, 0.25, 0).unwrap();
    let cfg = tiny_compare(PlanPolicy::Fixed { requests: vec![PruneRequest::new("conv13", 4)] });
    let (a, b, _) = compare_modalities((&t_tr, &t_va), (&t_tr, &t_va), &cfg).unwrap();
    assert_eq!(a.log.network, "A");
    assert_eq!(b.log.network, "B");
    assert!(a.log.phases.len() + usize::from(a.log.rejected.is_some()) == 1);
    let x = Tensor::zeros(&[1, 3, 32, 32]);
    assert_eq!(a.pruned.forward(&x).unwrap().shape(), &[1, 10]);
}
