use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use prunekit::data::{encode_cifar10_records, encode_idx_images, encode_idx_labels, synthetic, write_raw, LabeledDataset};
use prunekit::meter::{meter_model, CSV_HEADER};
use prunekit::model::{load_checkpoint, save_checkpoint, ModelGraph};
use prunekit::train::{SessionLog, SUMMARY_CSV_HEADER};
use prunekit::Tensor;

fn prunekit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_prunekit"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn raw_dir(root: &Path, n: usize) -> PathBuf {
    let dir = root.join("raw");
    std::fs::create_dir_all(&dir).unwrap();
    write_raw(&dir.join("train.pkds"), &synthetic::halves(n, [3, 32, 32], 7).unwrap()).unwrap();
    dir
}

const TINY: &[&str] = &["--arch", "vgg16", "--width", "0.0625", "--format", "raw", "--batch-size", "16"];

fn train_tiny(data: &Path, out: &Path, seed: &str) -> Output {
    let mut args = vec!["train", "--data", s(data), "--out", s(out), "--epochs", "2", "--seed", seed];
    args.extend_from_slice(TINY);
    prunekit(&args)
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(code(&prunekit(&["--help"])), 0);
    assert_eq!(code(&prunekit(&["--version"])), 0);
    assert_eq!(code(&prunekit(&["prune", "--help"])), 0);
}

#[test]
fn usage_errors_exit_one_and_name_the_flag() {
    let out = prunekit(&["train", "--out", "x.pkpt"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("--data"), "{}", stderr(&out));
    assert_eq!(code(&prunekit(&["train", "--bogus"])), 1);
    assert_eq!(code(&prunekit(&["report", "--input", "3x32"])), 1);
    let dir = tempfile::tempdir().unwrap();
    let data = raw_dir(dir.path(), 8);
    let out_path = dir.path().join("m.pkpt");
    let out = prunekit(&["train", "--data", s(&data), "--format", "raw", "--width", "2", "--out", s(&out_path)]);
    assert_eq!(code(&out), 1, "{}", stderr(&out));
}

#[test]
fn corrupt_inputs_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("m.pkpt");

    let idx = dir.path().join("idx");
    std::fs::create_dir_all(&idx).unwrap();
    let (pixels, labels) = synthetic::digits(4, 0);
    let mut images = encode_idx_images(4, 28, 28, &pixels);
    images.truncate(images.len() - 10);
    std::fs::write(idx.join("train-images-idx3-ubyte"), images).unwrap();
    std::fs::write(idx.join("train-labels-idx1-ubyte"), encode_idx_labels(&labels)).unwrap();

    let cifar = dir.path().join("cifar");
    std::fs::create_dir_all(&cifar).unwrap();
    let (pixels, mut labels) = synthetic::textures(2, 0);
    labels[0] = 12;
    std::fs::write(cifar.join("data_batch_1.bin"), encode_cifar10_records(&pixels, &labels)).unwrap();

    let raw = dir.path().join("raw");
    std::fs::create_dir_all(&raw).unwrap();
    std::fs::write(raw.join("train.pkds"), b"PKDS\r\n\x1a\nnope").unwrap();

    for (data, format) in [(&idx, "idx"), (&cifar, "cifar10"), (&raw, "raw")] {
        let out = prunekit(&["train", "--data", s(data), "--format", format, "--out", s(&out_path)]);
        assert_eq!(code(&out), 2, "{format}: {}", stderr(&out));
        assert!(!out_path.exists());
    }
    let bad_model = dir.path().join("bad.pkpt");
    std::fs::write(&bad_model, b"not a checkpoint").unwrap();
    let out = prunekit(&["report", "--model", s(&bad_model)]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}

#[test]
fn non_finite_loss_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let data = raw_dir(dir.path(), 32);
    let out_path = dir.path().join("m.pkpt");
    let mut args = vec!["train", "--data", s(&data), "--out", s(&out_path), "--epochs", "3", "--lr", "1e12"];
    args.extend_from_slice(TINY);
    let out = prunekit(&args);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    assert!(stderr(&out).contains("epoch"), "{}", stderr(&out));
    assert!(!out_path.exists());
}

#[test]
fn out_of_range_raw_pixels_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw");
    std::fs::create_dir_all(&raw).unwrap();
    let images = Tensor::from_fn(&[4, 3, 32, 32], |_| f32::NAN);
    let ds = LabeledDataset::new(images, vec![0, 1, 0, 1], 2, prunekit::data::Split::Train).unwrap();
    write_raw(&raw.join("train.pkds"), &ds).unwrap();
    let out = train_tiny(&raw, &dir.path().join("m.pkpt"), "0");
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}

#[test]
fn training_is_reproducible_and_writes_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let data = raw_dir(dir.path(), 48);
    let (a, b, c) = (dir.path().join("a.pkpt"), dir.path().join("b.pkpt"), dir.path().join("c.pkpt"));
    for (p, seed) in [(&a, "3"), (&b, "3"), (&c, "4")] {
        let out = train_tiny(&data, p, seed);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    let read = |p: &Path| std::fs::read(p).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
    let history = std::fs::read_to_string(dir.path().join("a.pkpt.history.csv")).unwrap();
    assert_eq!(history.lines().count(), 3);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("a.pkpt.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["seeds"]["root"], 3);
    let digest = manifest["inputs"][0]["sha256"].as_str().unwrap();
    assert_eq!(digest.len(), 64);
    assert!(manifest["wall_time_s"].as_f64().unwrap() >= 0.0);
}

#[test]
fn prune_session_outputs_agree_with_the_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let data = raw_dir(dir.path(), 48);
    let model = dir.path().join("m.pkpt");
    assert_eq!(code(&train_tiny(&data, &model, "1")), 0);

    let empty_plan = dir.path().join("empty.json");
    std::fs::write(&empty_plan, "[]").unwrap();
    let same = dir.path().join("same.pkpt");
    let prune = |plan: &Path, out: &Path, budget: &str| {
        prunekit(&[
            "prune", "--model", s(&model), "--plan", s(plan), "--data", s(&data), "--format", "raw",
            "--retrain-epochs", "1", "--budget", budget, "--batch-size", "16", "--out", s(out),
        ])
    };
    let out = prune(&empty_plan, &same, "0.01");
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(std::fs::read(&model).unwrap(), std::fs::read(&same).unwrap());

    let plan = dir.path().join("plan.json");
    std::fs::write(&plan, r#"[{"layer": "conv1", "m": 2}, {"layer": "conv13", "m": 8}]"#).unwrap();
    let pruned = dir.path().join("p.pkpt");
    let out = prune(&plan, &pruned, "1.0");
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let log = SessionLog::from_json(&std::fs::read_to_string(dir.path().join("p.pkpt.log.json")).unwrap()).unwrap();
    assert_eq!(log.phases.len(), 2);
    let remeter = meter_model(&load_checkpoint(&pruned).unwrap()).unwrap();
    let last = log.final_meter();
    assert_eq!((last.params, last.flops), (remeter.total_params, remeter.total_flops));
    let summary = std::fs::read_to_string(dir.path().join("p.pkpt.summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines[0], SUMMARY_CSV_HEADER);
    assert_eq!(lines.len(), 3);
    assert!(lines[2].starts_with("network-pruned,"));
}

#[test]
fn bad_plans_exit_two_before_training() {
    let dir = tempfile::tempdir().unwrap();
    let data = raw_dir(dir.path(), 16);
    let model = dir.path().join("m.pkpt");
    assert_eq!(code(&train_tiny(&data, &model, "0")), 0);
    let cases = [
        (r#"[{"layer": "conv1", "m": 1}, {"layer": "conv99", "m": 1}]"#, "step 1"),
        (r#"[{"layer": "fc1", "m": 1}]"#, "step 0"),
        (r#"[{"layer": "conv1", "m": 1000}]"#, "step 0"),
        (r#"[{"layer": "conv1"}]"#, "step 0"),
        ("{", "plan"),
    ];
    for (i, (text, needle)) in cases.iter().enumerate() {
        let plan = dir.path().join(format!("plan{i}.json"));
        std::fs::write(&plan, text).unwrap();
        let out_path = dir.path().join(format!("out{i}.pkpt"));
        let out = prunekit(&[
            "prune", "--model", s(&model), "--plan", s(&plan), "--data", "/nonexistent", "--out", s(&out_path),
        ]);
        assert_eq!(code(&out), 2, "case {i}: {}", stderr(&out));
        assert!(stderr(&out).contains(needle), "case {i}: {}", stderr(&out));
        assert!(!out_path.exists());
    }
}

#[test]
fn report_of_an_empty_model_is_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.pkpt");
    save_checkpoint(&ModelGraph::new([3, 8, 8], 2, vec![]).unwrap(), &path).unwrap();
    let csv = dir.path().join("r.csv");
    let out = prunekit(&["report", "--model", s(&path), "--out", s(&csv)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(std::fs::read_to_string(&csv).unwrap(), format!("{CSV_HEADER}\n"));
}

#[test]
fn report_to_stdout_totals_vgg16() {
    let out = prunekit(&["report", "--arch", "vgg16"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with(CSV_HEADER));
    assert!(text.lines().last().unwrap().starts_with("total,,14982474,"), "{text}");
}

#[test]
fn sensitivity_and_plan_commands_write_their_files() {
    let dir = tempfile::tempdir().unwrap();
    let data = raw_dir(dir.path(), 32);
    let model = dir.path().join("m.pkpt");
    assert_eq!(code(&train_tiny(&data, &model, "0")), 0);
    let out_dir = dir.path().join("sens");
    let out = prunekit(&[
        "sensitivity", "--model", s(&model), "--data", s(&data), "--format", "raw", "--fractions", "0,0.5",
        "--out-dir", s(&out_dir),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let sens = std::fs::read_to_string(out_dir.join("sensitivity.csv")).unwrap();
    assert_eq!(sens.lines().count(), 1 + 13 * 2);
    let norms = std::fs::read_to_string(out_dir.join("norms.csv")).unwrap();
    assert!(norms.starts_with("layer_id,rank,norm,norm_normalized"));
    assert!(out_dir.join("manifest.json").exists());

    let plan = dir.path().join("plan.json");
    let out = prunekit(&[
        "plan", "--model", s(&model), "--data", s(&data), "--format", "raw", "--fractions", "0,0.5",
        "--fraction", "0.5", "--out", s(&plan),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let requests = prunekit::prune::parse_requests(&std::fs::read_to_string(&plan).unwrap()).unwrap();
    assert_eq!(requests.len(), 13);
    let bad = prunekit(&["sensitivity", "--model", s(&model), "--data", s(&data), "--format", "raw", "--fractions", "0.5,0.2"]);
    assert_eq!(code(&bad), 1, "{}", stderr(&bad));
}
