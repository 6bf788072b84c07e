//! Process-level behaviour of the `sde-infer` binary: exit codes, config
//! diagnostics, and the single-observation edge case.

use std::path::PathBuf;
use std::process::Command;

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sde-infer"))
}

fn fresh_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("sde_infer_cli_{name}"));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn small_config(dir: &std::path::Path, extra: &str) -> PathBuf {
    let out_dir = dir.join("out");
    let text = format!(
        r#"{{
  "seed": 5,
  "io": {{"out_dir": "{}"}},
  "prior": {{"beta": 3.01, "theta": 4.0, "k_modes": 8, "n_pop": 100, "recovery_gamma": 0.5, "target_alpha": 1.0}},
  "chain": {{"pcn_step": 0.4, "iterations": 120, "burn_in": 20, "thinning": 4}},
  "fd": {{"cells": 64, "theta": 0.5, "dt_cap": 0.01, "bc": "reflecting"}},
  "sim": {{"x0": 0.1, "dt_sim": 0.001, "t_horizon": 1.0, "n_obs": 10, "u_true_poly": [1.0, 0.0, -1.0]}}{extra}
}}"#,
        out_dir.display()
    );
    let path = dir.join("config.json");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn corrupted_config_exits_with_code_2_and_field_path() {
    let dir = fresh_dir("badcfg");
    let path = dir.join("config.json");
    std::fs::write(&path, r#"{"prior": {"beta": 3.01, "theta": 4.0}}"#).unwrap();
    let output = binary()
        .args(["simulate", "--config"])
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("prior"), "diagnostic lacks field path: {stderr}");
}

#[test]
fn missing_config_exits_with_code_3() {
    let output = binary()
        .args(["simulate", "--config", "/nonexistent/config.json"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(3));
}

#[test]
fn declared_mode_must_match_command() {
    let dir = fresh_dir("modemismatch");
    let path = small_config(&dir, ",\n  \"mode\": \"sample\"");
    let output = binary()
        .args(["simulate", "--config"])
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn seed_override_changes_the_data() {
    let dir = fresh_dir("seedover");
    let path = small_config(&dir, "");
    assert!(binary()
        .args(["simulate", "--config"])
        .arg(&path)
        .status()
        .unwrap()
        .success());
    let first = std::fs::read(dir.join("out/observations.json")).unwrap();
    assert!(binary()
        .args(["simulate", "--config"])
        .arg(&path)
        .args(["--seed", "99"])
        .status()
        .unwrap()
        .success());
    let second = std::fs::read(dir.join("out/observations.json")).unwrap();
    assert_ne!(first, second, "seed override left the data unchanged");
}

/// A single observation makes the likelihood the empty product; the sample
/// command then reproduces the prior and still succeeds.
#[test]
fn single_observation_runs_in_prior_mode() {
    let dir = fresh_dir("singleobs");
    let path = small_config(&dir, "");
    // rewrite with one observation over a short horizon
    let text = std::fs::read_to_string(&path)
        .unwrap()
        .replace("\"t_horizon\": 1.0", "\"t_horizon\": 0.1")
        .replace("\"n_obs\": 10", "\"n_obs\": 1");
    std::fs::write(&path, text).unwrap();

    let sim = binary()
        .args(["simulate", "--config"])
        .arg(&path)
        .output()
        .unwrap();
    assert!(sim.status.success());
    let obs = std::fs::read_to_string(dir.join("out/observations.json")).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(&obs).unwrap();
    assert_eq!(parsed["s"].as_array().unwrap().len(), 1);

    let sample = binary()
        .args(["sample", "--config"])
        .arg(&path)
        .output()
        .unwrap();
    assert!(sample.status.success(), "{}", String::from_utf8_lossy(&sample.stderr));
    let stdout = String::from_utf8_lossy(&sample.stdout);
    assert!(stdout.contains("empty product"), "missing prior-mode notice: {stdout}");
}

/// With the default (experiment-regime) configuration every validation
/// suite passes, including the parametrix one.
#[test]
fn validate_default_config_passes() {
    let dir = fresh_dir("validate_default");
    let mut cfg: sde_infer::RunConfig = serde_json::from_str("{}").unwrap();
    cfg.io.out_dir = dir.join("out").to_str().unwrap().to_string();
    let report = sde_infer::cmd_validate(&cfg, false).unwrap();
    assert!(report.pass(), "failing suite: {:?}", report.first_failure());
    assert_eq!(report.suites.len(), 5);
    assert!(dir.join("out/validation.json").exists());
}

#[test]
fn simulate_is_deterministic_across_processes() {
    let dir = fresh_dir("procdet");
    let path = small_config(&dir, "");
    assert!(binary().args(["simulate", "--config"]).arg(&path).status().unwrap().success());
    let first = std::fs::read(dir.join("out/path.csv")).unwrap();
    assert!(binary().args(["simulate", "--config"]).arg(&path).status().unwrap().success());
    let second = std::fs::read(dir.join("out/path.csv")).unwrap();
    assert_eq!(first, second);
}
