//! End-to-end checks of the command-line interface: exit statuses, early
//! config rejection, and the predict edge cases.

use std::path::Path;
use std::process::{Command, Output};

fn augboost(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_augboost"))
        .args(args)
        .output()
        .unwrap()
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

const SMALL_CONFIG: &str = r#"{
  "seed": 3,
  "trajectory": {"n_steps": 120, "n_cells": 6},
  "boost": {"n_stages": 2, "refresh_period": 2, "augmenter": "identity",
            "tree": {"max_depth": 2, "min_samples_leaf": 2, "min_samples_split": 4}},
  "split": {"train_fraction": 0.7, "repetitions": 2, "seed": 3}
}"#;

#[test]
fn usage_error_exits_1() {
    let out = augboost(&["--no-such-flag"]);
    assert_eq!(out.status.code(), Some(1));
    let out = augboost(&["synth"]); // missing --out
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn help_exits_0() {
    let out = augboost(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("synth"));
}

#[test]
fn bad_config_rejected_before_any_work() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    let data = dir.path().join("data.csv");
    // unknown key
    write(&config, r#"{"no_such_key": 1}"#);
    let out = augboost(&["synth", "--config", config.to_str().unwrap(), "--out", data.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!data.exists());
    // more subsets than features
    write(&config, r#"{"n_beacons": 2, "boost": {"n_subsets": 3}}"#);
    let out = augboost(&["synth", "--config", config.to_str().unwrap(), "--out", data.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_subsets"));
    assert!(!data.exists());
}

#[test]
fn missing_data_file_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = augboost(&[
        "train",
        "--data",
        dir.path().join("absent.csv").to_str().unwrap(),
        "--out",
        dir.path().join("model.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn predict_pipeline_and_edge_cases() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    write(&config, SMALL_CONFIG);
    let c = config.to_str().unwrap();
    let data = dir.path().join("data.csv");
    let model = dir.path().join("model.json");
    let pred = dir.path().join("pred.csv");

    let out = augboost(&["synth", "--config", c, "--out", data.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let out = augboost(&[
        "train", "--config", c,
        "--data", data.to_str().unwrap(),
        "--out", model.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let out = augboost(&[
        "predict", "--config", c,
        "--model", model.to_str().unwrap(),
        "--data", data.to_str().unwrap(),
        "--out", pred.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let lines: Vec<String> = std::fs::read_to_string(&pred)
        .unwrap()
        .lines()
        .map(str::to_owned)
        .collect();
    assert_eq!(lines[0], "predicted_label,x,y");
    assert_eq!(lines.len(), 121); // header + one row per sample

    // header-only input: empty output, status 0
    let empty = dir.path().join("empty.csv");
    let header = std::fs::read_to_string(&data).unwrap().lines().next().unwrap().to_owned();
    write(&empty, &format!("{header}\n"));
    let out = augboost(&[
        "predict", "--config", c,
        "--model", model.to_str().unwrap(),
        "--data", empty.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&out.stdout), "predicted_label,x,y\n");

    // beacon-count mismatch is a data error
    let narrow_config = dir.path().join("narrow.json");
    write(
        &narrow_config,
        r#"{"seed": 3, "n_beacons": 4, "trajectory": {"n_steps": 60, "n_cells": 6}}"#,
    );
    let narrow = dir.path().join("narrow.csv");
    let out = augboost(&[
        "synth", "--config", narrow_config.to_str().unwrap(),
        "--out", narrow.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let out = augboost(&[
        "predict", "--config", narrow_config.to_str().unwrap(),
        "--model", model.to_str().unwrap(),
        "--data", narrow.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("features"));
}

#[test]
fn compare_emits_three_ranked_rows() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    write(&config, SMALL_CONFIG);
    let c = config.to_str().unwrap();
    let data = dir.path().join("data.csv");
    augboost(&["synth", "--config", c, "--out", data.to_str().unwrap()]);
    let outdir = dir.path().join("cmp");
    let out = augboost(&[
        "compare", "--config", c,
        "--data", data.to_str().unwrap(),
        "--out", outdir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(outdir.join("compare.csv")).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    let means: Vec<f64> = rows
        .iter()
        .map(|r| r.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(means.windows(2).all(|w| w[0] <= w[1]), "rows not ranked: {means:?}");
}
