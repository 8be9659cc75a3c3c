use std::path::Path;
use std::process::{Command, Output};

fn dafs(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dafs"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

const TINY_TRAIN: &str = r#"{
    "env": "cartpole+aug",
    "iterations": 4,
    "steps_per_iteration": 64,
    "workers": 2,
    "ppo": {"minibatch": 16, "epochs": 2, "actor_hidden": [8], "critic_hidden": [16], "attention_hidden": 6}
}"#;

fn tiny_experiment(output: &str) -> String {
    format!(
        r#"{{
    "train": {TINY_TRAIN},
    "top_k": [2],
    "baselines": {{"full": true, "random_trials": 2}},
    "eval": {{"seeds": [0, 1], "episodes": 2, "iterations": 2}},
    "output": "{output}"
}}"#
    )
}

#[test]
fn train_writes_a_parseable_run() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg.json"), TINY_TRAIN).unwrap();
    let out = dafs(&["train", "--config", "cfg.json", "--out", "run"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    for file in ["config.json", "params.json", "params.bin", "report.json", "weights.csv", "returns.csv"] {
        assert!(dir.path().join("run").join(file).is_file(), "{file}");
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("run/report.json")).unwrap()).unwrap();
    assert_eq!(report["iterations"], 4);
    let saved = std::fs::read_to_string(dir.path().join("run/config.json")).unwrap();
    assert!(saved.contains("\"plateau_tolerance\""), "defaults are materialised");
}

#[test]
fn minimal_config_uses_defaults() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("cfg.json"),
        r#"{"iterations": 1, "steps_per_iteration": 32, "ppo": {"critic_hidden": [8], "minibatch": 16}}"#,
    )
    .unwrap();
    let out = dafs(&["train", "--config", "cfg.json"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(dir.path().join("runs/cartpole-ppo-seed0/report.json").is_file());
}

#[test]
fn fixed_seed_runs_give_identical_weight_csvs() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg.json"), TINY_TRAIN).unwrap();
    for run in ["a", "b"] {
        let out = dafs(&["train", "--config", "cfg.json", "--seed", "7", "--out", run], dir.path());
        assert!(out.status.success(), "{}", stderr(&out));
    }
    let a = std::fs::read(dir.path().join("a/weights.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b/weights.csv")).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, b);
}

#[test]
fn invalid_env_lists_valid_options() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg.json"), r#"{"env": "lunarlander"}"#).unwrap();
    let out = dafs(&["train", "--config", "cfg.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let msg = stderr(&out);
    assert!(msg.contains("lunarlander") && msg.contains("cartpole") && msg.contains("pendulum"), "{msg}");
}

#[test]
fn bad_config_field_is_named() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg.json"), r#"{"iteratons": 3}"#).unwrap();
    let out = dafs(&["train", "--config", "cfg.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("iteratons"), "{}", stderr(&out));
    std::fs::write(dir.path().join("cfg.json"), r#"{"workers": 0}"#).unwrap();
    let out = dafs(&["train", "--config", "cfg.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("workers"), "{}", stderr(&out));
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(dafs(&["frobnicate"], dir.path()).status.code(), Some(1));
    assert_eq!(dafs(&["rank", "--run", "x"], dir.path()).status.code(), Some(1));
    assert_eq!(dafs(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn rank_lists_prefixes_and_rejects_large_k() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg.json"), TINY_TRAIN).unwrap();
    assert!(dafs(&["train", "--config", "cfg.json", "--out", "run"], dir.path()).status.success());
    let lines = |k: &str| -> Vec<String> {
        let out = dafs(&["rank", "--run", "run", "--k", k], dir.path());
        assert!(out.status.success(), "{}", stderr(&out));
        stdout(&out).lines().skip(1).map(str::to_string).collect()
    };
    let all = lines("8");
    assert_eq!(all.len(), 8);
    for name in ["x", "v", "theta", "omega", "sin(theta)", "cos(theta)", "P_Ran", "Ran"] {
        assert!(all.iter().any(|l| l.split_whitespace().nth(2) == Some(name)), "{name}");
    }
    let weights: Vec<f64> = all.iter().map(|l| l.split_whitespace().last().unwrap().parse().unwrap()).collect();
    assert!(weights.windows(2).all(|w| w[0] >= w[1]));
    assert_eq!(lines("3"), all[..3].to_vec());
    let ranking: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("run/ranking.json")).unwrap()).unwrap();
    assert_eq!(ranking.as_array().unwrap().len(), 3);
    let out = dafs(&["rank", "--run", "run", "--k", "9"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn report_writes_summary_and_curves() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg.json"), TINY_TRAIN).unwrap();
    assert!(dafs(&["train", "--config", "cfg.json", "--out", "run"], dir.path()).status.success());
    let out = dafs(&["report", "--run", "run", "--k", "2", "--out", "rep"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let summary = std::fs::read_to_string(dir.path().join("rep/summary.md")).unwrap();
    assert!(summary.contains("| D-AFS/PPO | x | v | theta | omega | sin(theta) | cos(theta) | P_Ran | Ran |"));
    assert_eq!(summary.matches("**").count(), 4, "two bold cells");
    let returns = std::fs::read_to_string(dir.path().join("rep/returns.csv")).unwrap();
    assert_eq!(returns.lines().count(), 1 + 4);
    let weights = std::fs::read_to_string(dir.path().join("rep/weights.csv")).unwrap();
    assert_eq!(weights.lines().count(), 1 + 4);
}

#[test]
fn corrupt_artifacts_name_the_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg.json"), TINY_TRAIN).unwrap();
    assert!(dafs(&["train", "--config", "cfg.json", "--out", "run"], dir.path()).status.success());
    std::fs::write(dir.path().join("run/report.json"), "[1,").unwrap();
    let out = dafs(&["report", "--run", "run"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("report.json"), "{}", stderr(&out));
}

#[test]
fn eval_is_deterministic_and_reports_statistics() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "eval", "--env", "cartpole+aug", "--features", "2,3", "--algo", "ppo", "--seeds", "0,1", "--iterations", "2",
        "--steps", "64", "--episodes", "3", "--out", "eval.json",
    ];
    let first = dafs(&args, dir.path());
    assert!(first.status.success(), "{}", stderr(&first));
    let a = std::fs::read_to_string(dir.path().join("eval.json")).unwrap();
    let second = dafs(&args, dir.path());
    assert_eq!(stdout(&first), stdout(&second));
    assert_eq!(a, std::fs::read_to_string(dir.path().join("eval.json")).unwrap());
    let value: serde_json::Value = serde_json::from_str(&a).unwrap();
    assert_eq!(value["indices"], serde_json::json!([2, 3]));
    assert_eq!(value["episodes"], 6);
    assert!(stdout(&first).contains("mean return"));
    let bad = dafs(&["eval", "--env", "cartpole", "--features", "7"], dir.path());
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn compare_requires_a_prior_run_then_reports_every_subset() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("exp.json"), tiny_experiment("exp")).unwrap();
    let missing = dafs(&["compare", "--config", "exp.json"], dir.path());
    assert_eq!(missing.status.code(), Some(2));
    assert!(stderr(&missing).contains("dafs train"), "{}", stderr(&missing));

    let trained = dafs(&["train", "--config", "exp.json"], dir.path());
    assert!(trained.status.success(), "{}", stderr(&trained));
    assert!(dir.path().join("exp/dafs/experiment.json").is_file());
    let out = dafs(&["compare", "--config", "exp.json"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("exp/comparison.json")).unwrap()).unwrap();
    let entries = report["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 1 + 2 + 1);
    assert_eq!(entries.iter().filter(|e| e["kind"] == "random").count(), 2);
    for e in entries {
        assert!(!e["evaluation"]["indices"].as_array().unwrap().is_empty());
        assert_eq!(e["evaluation"]["per_seed"].as_array().unwrap().len(), 2);
    }
    assert_eq!(report["best_random"].as_array().unwrap().len(), 1);
    assert_eq!(report["config_hash"].as_str().unwrap().len(), 16);
    let markdown = std::fs::read_to_string(dir.path().join("exp/comparison.md")).unwrap();
    assert!(markdown.contains("best of n"));
}
