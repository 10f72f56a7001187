use std::path::Path;
use std::process::{Command, Output};

fn crowdnav(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crowdnav")).current_dir(dir).env_remove("CROWDNAV_CONFIG").args(args).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = crowdnav(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn config_file_flags_and_environment() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("run.toml"), "[training]\nepochs = 7\n[scenario]\npedestrian_count = 2\n").unwrap();
    let printed = ok(d, &["--config", "run.toml", "--set", "training.lambda_rank=0.5", "config"]);
    assert!(printed.contains("epochs = 7"));
    assert!(printed.contains("lambda_rank = 0.5"));
    assert!(printed.contains("pedestrian_count = 2"));

    let via_env = Command::new(env!("CARGO_BIN_EXE_crowdnav")).current_dir(d).env("CROWDNAV_CONFIG", "run.toml").arg("config").output().unwrap();
    assert!(String::from_utf8(via_env.stdout).unwrap().contains("epochs = 7"));

    let bad = crowdnav(d, &["--set", "training.epochz=3", "config"]);
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("error"));
    assert!(!crowdnav(d, &["--config", "missing.toml", "config"]).status.success());
}

#[test]
fn collect_verify_rank_simulate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let table = ok(d, &["collect", "--out", "demos.jsonl", "--set", "collect.episodes=4", "--seed", "3"]);
    assert_eq!(table.lines().filter(|l| l.contains("p=")).count(), 4);
    assert!(ok(d, &["verify", "--archive", "demos.jsonl"]).contains("4 episodes verified"));
    assert_eq!(ok(d, &["rank", "--archive", "demos.jsonl"]), table.trim_end().to_string() + "\n");

    let line = ok(d, &["simulate", "--seed", "3", "--p-noise", "0.5", "--out", "one.jsonl"]);
    let first: serde_json::Value = serde_json::from_str(line.lines().next().unwrap()).unwrap();
    assert_eq!(first["seed"], 3);
    assert!(ok(d, &["verify", "--archive", "one.jsonl"]).contains("1 episodes verified"));

    // a damaged archive fails verification
    let text = std::fs::read_to_string(d.join("one.jsonl")).unwrap();
    let damaged = text.replacen("\"svcr\":", "\"svcr\":1", 1);
    std::fs::write(d.join("bad.jsonl"), damaged).unwrap();
    assert!(!crowdnav(d, &["verify", "--archive", "bad.jsonl"]).status.success());
}

#[test]
fn train_then_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["collect", "--out", "demos.jsonl", "--set", "collect.episodes=6"]);
    let stats = ok(d, &["train", "--archive", "demos.jsonl", "--out", "model.json", "--holdout", "demos.jsonl", "--set", "training.epochs=3"]);
    let epochs: Vec<serde_json::Value> = stats.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(epochs.len(), 3);
    assert!(epochs.iter().all(|e| e["holdout_accuracy"].is_number() && e["likelihood"].is_number()));

    let out = ok(d, &["evaluate", "--checkpoint", "model.json", "--out", "report.json", "--set", "evaluate.episodes=2", "--set", "scenario.pedestrian_count=0"]);
    let episodes: Vec<serde_json::Value> = out.lines().filter(|l| l.starts_with('{')).map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(episodes.len(), 2);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["summary"]["episodes"], 2);
    assert_eq!(report["seed"], 10_000);
    assert!(!crowdnav(d, &["evaluate", "--checkpoint", "nope.json"]).status.success());
}
