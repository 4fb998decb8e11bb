use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sparseprox::metrics::SparsityReport;
use sparseprox::nn::{dense, Activation, InitScheme, NetworkModel};

fn sparseprox(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sparseprox"))
        .args(args)
        .env_remove("SPARSEPROX_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, train: &str) -> PathBuf {
    let path = dir.join("run.json");
    let text = format!(
        r#"{{
          "train": {train},
          "architecture": {{"input": {{"features": 10}}, "layers": [{{"type": "dense", "units": 8}}]}},
          "dataset": {{"kind": "synthetic", "n": 120, "informative": 4, "noise": 6, "classes": 3, "seed": 5}},
          "output_dir": "out"
        }}"#
    );
    std::fs::write(&path, text).unwrap();
    path
}

const TRAIN: &str = r#"{"lambda": 1e-3, "learning_rate": 0.05, "batch_size": 8, "max_iterations": 240, "seed": 1}"#;

#[test]
fn train_writes_three_outputs_with_one_trace_row_per_epoch() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), TRAIN);
    let out = sparseprox(&["train", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let out_dir = dir.path().join("out");
    for file in ["checkpoint.json", "trace.csv", "report.json"] {
        assert!(out_dir.join(file).is_file(), "{file}");
    }
    // 96 training samples at batch 8: 12 iterations per epoch, 20 epochs
    let trace = std::fs::read_to_string(out_dir.join("trace.csv")).unwrap();
    let lines: Vec<&str> = trace.lines().collect();
    assert_eq!(
        lines[0],
        "iteration,loss,accuracy,nonzero_fraction,flop_ratio,neurons_removed"
    );
    assert_eq!(lines.len(), 1 + 20);
    assert!(lines[1].starts_with("12,"));
    assert!(lines[20].starts_with("240,"));
    let report: SparsityReport =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    assert!(report.accuracy > 0.5);
}

#[test]
fn override_suffixes_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), TRAIN);
    let out = sparseprox(&["train", config.to_str().unwrap(), "--override", "lambda=1e-5"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(dir.path().join("out_lambda_1e-5/checkpoint.json").is_file());
    assert!(!dir.path().join("out").exists());
}

#[test]
fn unknown_config_key_is_a_usage_error_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), r#"{"lambda": 1e-3, "lamda": 2}"#);
    let out = sparseprox(&["train", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("lamda"), "{}", stderr(&out));

    let config = write_config(dir.path(), TRAIN);
    let out = sparseprox(&["train", config.to_str().unwrap(), "--override", "momentum=0.9"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("momentum"));
}

#[test]
fn missing_dataset_is_rejected_before_training() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.json");
    std::fs::write(
        &config,
        r#"{"architecture": {"input": {"features": 64}}, "dataset": {"kind": "csv", "path": "nope.csv"},
            "output_dir": "out"}"#,
    )
    .unwrap();
    let out = sparseprox(&["train", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("nope.csv"));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn divergence_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.json");
    std::fs::write(
        &config,
        r#"{"train": {"learning_rate": 1e8, "batch_size": 8, "max_iterations": 200, "regularizer_mode": "none"},
            "architecture": {"input": {"features": 10}, "layers": [{"type": "dense", "units": 8}]},
            "dataset": {"kind": "synthetic", "n": 120, "informative": 4, "noise": 6, "classes": 3, "seed": 5},
            "output_dir": "out"}"#,
    )
    .unwrap();
    let out = sparseprox(&["train", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}

#[test]
fn seed_environment_variable_overrides_config_seed() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), TRAIN);
    let run = |seed: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_sparseprox"));
        cmd.args(["train", config.to_str().unwrap()]);
        match seed {
            Some(s) => cmd.env("SPARSEPROX_SEED", s),
            None => cmd.env_remove("SPARSEPROX_SEED"),
        };
        assert!(cmd.output().unwrap().status.success());
        std::fs::read(dir.path().join("out/checkpoint.json")).unwrap()
    };
    let default = run(None);
    assert_eq!(run(Some("1")), default);
    assert_ne!(run(Some("2")), default);
}

#[test]
fn prox_check_reports_and_is_repeatable() {
    let a = sparseprox(&["prox-check", "--samples", "300", "--seed", "9"]);
    assert_eq!(a.status.code(), Some(0));
    assert!(stdout(&a).contains("max absolute deviation"));
    let b = sparseprox(&["prox-check", "--samples", "300", "--seed", "9"]);
    assert_eq!(stdout(&a), stdout(&b));
    assert_eq!(sparseprox(&["prox-check", "--samples", "0"]).status.code(), Some(2));
}

#[test]
fn contours_write_grids() {
    let dir = tempfile::tempdir().unwrap();
    let l1 = dir.path().join("l1.csv");
    let out = sparseprox(&[
        "contours",
        "l1",
        "--resolution",
        "101",
        "--output",
        l1.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(std::fs::read_to_string(&l1).unwrap().lines().count(), 10201 + 1);

    let tl1 = dir.path().join("tl1.csv");
    let out = sparseprox(&[
        "contours",
        "tl1",
        "--a",
        "1",
        "--resolution",
        "5",
        "--output",
        tl1.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&tl1).unwrap();
    let origin = text
        .lines()
        .skip(1)
        .find(|l| l.starts_with("0,0,"))
        .expect("origin row");
    assert_eq!(origin, "0,0,0");

    let presets = dir.path().join("presets");
    let out = sparseprox(&[
        "contours",
        "tl1",
        "--tl1-shape-presets",
        "--output",
        presets.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    for name in ["tl1_a_0.01.csv", "tl1_a_1.csv", "tl1_a_100.csv"] {
        assert!(presets.join(name).is_file(), "{name}");
    }

    let out = sparseprox(&["contours", "l3", "--output", l1.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("l1_minus_l2"));
}

fn digits_csv() -> String {
    concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/digits.csv").to_string()
}

#[test]
fn report_on_fresh_and_zeroed_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let specs = [dense(64, 16, Activation::Relu), dense(16, 10, Activation::Softmax)];
    let mut model = NetworkModel::initialized(&specs, InitScheme::Xavier, 0).unwrap();
    let fresh = dir.path().join("fresh.json");
    model.save_json(&fresh).unwrap();
    let out = sparseprox(&[
        "report",
        fresh.to_str().unwrap(),
        "--csv",
        &digits_csv(),
        "--scale",
        "0.0625",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let report: SparsityReport = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report.nonzero_fraction, 1.0);
    assert_eq!(report.flop_ratio, 1.0);

    for layer in model.layers_mut() {
        layer.weights.as_array_mut().fill(0.0);
    }
    let zeroed = dir.path().join("zeroed.json");
    model.save_json(&zeroed).unwrap();
    let out = sparseprox(&["report", zeroed.to_str().unwrap(), "--csv", &digits_csv()]);
    let report: SparsityReport = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report.flop_ratio, 0.0);
    assert_eq!(report.nonzero_fraction, 0.0);
}

#[test]
fn report_shape_mismatch_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let model = NetworkModel::initialized(&[dense(10, 3, Activation::Softmax)], InitScheme::Xavier, 0).unwrap();
    let path = dir.path().join("m.json");
    model.save_json(&path).unwrap();
    let out = sparseprox(&["report", path.to_str().unwrap(), "--csv", &digits_csv()]);
    assert_eq!(out.status.code(), Some(2));
}
