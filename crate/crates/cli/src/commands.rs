use std::path::Path;

use prunekit::meter::{meter, FOOTER_NOTE};
use prunekit::model::{build, load_checkpoint, save_checkpoint, Arch, BuildOptions, ModelGraph};
use prunekit::prune::{parse_requests, requests_to_json, resolve_plan, PruneRequest, Provenance};
use prunekit::rng::derive_seed;
use prunekit::sensitivity::{
    greedy_plan, norm_report, norms_csv, parse_fractions, sensitivity_csv, sweep_all, SensitivityCurve,
};
use prunekit::train::{
    compare_modalities, run_prune_session, train as fit, CompareConfig, ModalityResult, PlanPolicy,
    PruneSessionConfig, TrainConfig,
};

use crate::data::{load, load_args, LoadOptions};
use crate::manifest::{sibling, RunManifest};
use crate::{
    CliError, CliResult, CompareArgs, PlanArgs, PruneArgs, ReportArgs, ScheduleArgs, SensitivityArgs, TrainArgs,
};

fn write(path: &Path, contents: &str, manifest: &mut RunManifest) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, contents)?;
    manifest.output(path);
    Ok(())
}

fn save_model(model: &ModelGraph, path: &Path, manifest: &mut RunManifest) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    save_checkpoint(model, path)?;
    manifest.output(path);
    Ok(())
}

fn train_config(s: &ScheduleArgs, epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        lr: s.lr,
        decay_factor: s.decay_factor,
        decay_every: s.decay_every,
        epochs,
        batch_size: s.batch_size,
        seed,
        hflip: s.hflip,
        ..TrainConfig::default()
    }
}

/// Parses `CxHxW`.
pub fn parse_shape(s: &str) -> CliResult<[usize; 3]> {
    let dims: Vec<usize> = s
        .split(['x', 'X'])
        .map(|d| d.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Usage(format!("--input expects CxHxW, got `{s}`")))?;
    <[usize; 3]>::try_from(dims).map_err(|_| CliError::Usage(format!("--input expects CxHxW, got `{s}`")))
}

pub fn train(a: &TrainArgs) -> CliResult<()> {
    let mut manifest = RunManifest::start("train", a, a.seed);
    let data = load_args(&a.data, a.seed, None)?;
    manifest.inputs(&data.files)?;
    let init = derive_seed(a.seed, "init");
    let opts = BuildOptions {
        width: a.width,
        batchnorm: a.batchnorm,
        seed: init,
    };
    let mut model = build(a.arch, data.train.sample_shape(), data.train.num_classes(), &opts)?;
    let cfg = train_config(&a.schedule, a.epochs, derive_seed(a.seed, "train"));
    manifest.seed("init", init);
    manifest.seed("train", cfg.seed);
    let history = fit(&mut model, &data.train, Some(&data.val), &cfg)?;
    save_model(&model, &a.out, &mut manifest)?;
    let history_path = a.history.clone().unwrap_or_else(|| sibling(&a.out, "history.csv"));
    write(&history_path, &history.to_csv(), &mut manifest)?;
    manifest.finish(&sibling(&a.out, "manifest.json"))
}

fn sweep(a: &SensitivityArgs, manifest: &mut RunManifest) -> CliResult<(ModelGraph, Vec<SensitivityCurve>)> {
    let fractions = parse_fractions(&a.fractions)?;
    let model = load_checkpoint(&a.model)?;
    manifest.input(&a.model)?;
    let data = load_args(&a.data, a.seed, Some(model.input_shape()))?;
    manifest.inputs(&data.files)?;
    let eval = match a.eval_samples {
        Some(n) => {
            let s = derive_seed(a.seed, "sweep");
            manifest.seed("sweep", s);
            data.val.sample(n, s)
        }
        None => data.val,
    };
    let curves = sweep_all(&model, &fractions, &eval)?;
    Ok((model, curves))
}

pub fn sensitivity(a: &SensitivityArgs) -> CliResult<()> {
    let mut manifest = RunManifest::start("sensitivity", a, a.seed);
    let (model, curves) = sweep(a, &mut manifest)?;
    write(&a.out_dir.join("sensitivity.csv"), &sensitivity_csv(&curves), &mut manifest)?;
    write(&a.out_dir.join("norms.csv"), &norms_csv(&norm_report(&model)?), &mut manifest)?;
    manifest.finish(&a.out_dir.join("manifest.json"))
}

pub fn plan(a: &PlanArgs) -> CliResult<()> {
    let mut manifest = RunManifest::start("plan", a, a.sweep.seed);
    let (_, curves) = sweep(&a.sweep, &mut manifest)?;
    let requests = greedy_plan(&curves, a.fraction)?;
    write(&a.out, &(requests_to_json(&requests) + "\n"), &mut manifest)?;
    manifest.finish(&sibling(&a.out, "manifest.json"))
}

fn read_plan(path: &Path, manifest: &mut RunManifest) -> CliResult<Vec<PruneRequest>> {
    let text = std::fs::read_to_string(path)?;
    manifest.input(path)?;
    Ok(parse_requests(&text)?)
}

pub fn prune(a: &PruneArgs) -> CliResult<()> {
    let mut manifest = RunManifest::start("prune", a, a.seed);
    let model = load_checkpoint(&a.model)?;
    manifest.input(&a.model)?;
    let requests = read_plan(&a.plan, &mut manifest)?;
    // Fail on a bad plan before any data is read or trained on.
    resolve_plan(&model, &requests, Provenance::Manual)?;
    let data = load_args(&a.data, a.seed, Some(model.input_shape()))?;
    manifest.inputs(&data.files)?;
    let cfg = PruneSessionConfig {
        retrain_epochs: a.retrain_epochs,
        retrain_lr: a.lr,
        budget: a.budget,
        batch_size: a.batch_size,
        seed: derive_seed(a.seed, "session"),
        baseline_accuracy: None,
    };
    manifest.seed("session", cfg.seed);
    let (pruned, log) = run_prune_session(&model, &requests, &data.train, &data.val, &cfg, &a.network)?;
    save_model(&pruned, &a.out, &mut manifest)?;
    let log_path = a.log.clone().unwrap_or_else(|| sibling(&a.out, "log.json"));
    write(&log_path, &(log.to_json() + "\n"), &mut manifest)?;
    let summary_path = a.summary.clone().unwrap_or_else(|| sibling(&a.out, "summary.csv"));
    write(&summary_path, &log.to_csv(), &mut manifest)?;
    manifest.phase_times(&a.network, log.phases.iter().map(|p| p.wall_time_s).collect());
    manifest.finish(&sibling(&a.out, "manifest.json"))
}

pub fn report(a: &ReportArgs) -> CliResult<()> {
    let mut manifest = RunManifest::start("report", a, 0);
    let input = a.input.as_deref().map(parse_shape).transpose()?;
    let model = match &a.model {
        Some(path) => {
            manifest.input(path)?;
            load_checkpoint(path)?
        }
        None => {
            let opts = BuildOptions {
                width: a.width.unwrap_or(1.0),
                batchnorm: a.batchnorm,
                seed: 0,
            };
            let shape = input.unwrap_or([3, 32, 32]);
            build(a.arch.unwrap_or(Arch::Vgg16), shape, a.classes.unwrap_or(10), &opts)?
        }
    };
    let r = meter(&model, input.unwrap_or(model.input_shape()))?;
    log::info!(
        "{:.4} M params, {:.4} M FLOPs, {:.4} MB ({FOOTER_NOTE})",
        r.params_m(),
        r.flops_m(),
        r.size_mb
    );
    match &a.out {
        Some(path) => {
            write(path, &r.to_csv(), &mut manifest)?;
            manifest.finish(&sibling(path, "manifest.json"))
        }
        None => {
            print!("{}", r.to_csv());
            Ok(())
        }
    }
}

fn write_modality(dir: &Path, m: &ModalityResult, manifest: &mut RunManifest) -> CliResult<()> {
    let tag = m.modality.to_string();
    save_model(&m.pruned, &dir.join(format!("{tag}.pkpt")), manifest)?;
    write(&dir.join(format!("{tag}.log.json")), &(m.log.to_json() + "\n"), manifest)?;
    write(&dir.join(format!("{tag}.plan.json")), &(requests_to_json(&m.plan) + "\n"), manifest)?;
    write(&dir.join(format!("{tag}.history.csv")), &m.history.to_csv(), manifest)?;
    if let Some(h) = &m.source_history {
        write(&dir.join(format!("{tag}.source-history.csv")), &h.to_csv(), manifest)?;
    }
    if !m.curves.is_empty() {
        write(&dir.join(format!("{tag}.sensitivity.csv")), &sensitivity_csv(&m.curves), manifest)?;
    }
    manifest.phase_times(&tag, m.log.phases.iter().map(|p| p.wall_time_s).collect());
    Ok(())
}

pub fn compare(a: &CompareArgs) -> CliResult<()> {
    let mut manifest = RunManifest::start("compare", a, a.seed);
    let opts = |label: &str, shape| LoadOptions {
        val_fraction: a.val_fraction,
        limit: Some(a.limit),
        standardize: a.standardize,
        seed: derive_seed(a.seed, label),
        shape,
    };
    let target = load(&a.target, a.target_format, &opts("data/target", None))?;
    let shape = target.train.sample_shape();
    let source = load(&a.source, a.source_format, &opts("data/source", Some(shape)))?;
    manifest.inputs(source.files.iter().chain(&target.files))?;
    let policy = match &a.plan {
        Some(path) => PlanPolicy::Fixed {
            requests: read_plan(path, &mut manifest)?,
        },
        None => PlanPolicy::Greedy {
            fraction: a.greedy_fraction,
            fractions: parse_fractions(&a.fractions)?,
            eval_samples: a.eval_samples,
        },
    };
    let cfg = CompareConfig {
        arch: a.arch,
        width: a.width,
        batchnorm: a.batchnorm,
        source_train: train_config(&a.schedule, a.source_epochs, 0),
        target_train: train_config(&a.schedule, a.target_epochs, 0),
        session: PruneSessionConfig {
            retrain_epochs: a.retrain_epochs,
            budget: a.budget,
            batch_size: a.schedule.batch_size,
            seed: derive_seed(a.seed, "session"),
            ..PruneSessionConfig::default()
        },
        policy,
        seed: a.seed,
    };
    for label in ["init/A", "init/B", "train/source", "train/target", "head", "sweep", "session"] {
        manifest.seed(label, derive_seed(a.seed, label));
    }
    let (ra, rb, report) = compare_modalities(
        (&source.train, &source.val),
        (&target.train, &target.val),
        &cfg,
    )?;
    let dir = &a.out_dir;
    write(&dir.join("report.csv"), &report.to_csv(), &mut manifest)?;
    write(&dir.join("report.json"), &(report.to_json() + "\n"), &mut manifest)?;
    write_modality(dir, &ra, &mut manifest)?;
    write_modality(dir, &rb, &mut manifest)?;
    log::info!(
        "A: {} phases, {:.4} -> {:.4}; B: {} phases, {:.4} -> {:.4}; A prunes further: {}",
        report.a_phases,
        report.a_baseline_accuracy,
        report.a_final_accuracy,
        report.b_phases,
        report.b_baseline_accuracy,
        report.b_final_accuracy,
        report.a_prunes_further
    );
    manifest.finish(&dir.join("manifest.json"))
}
