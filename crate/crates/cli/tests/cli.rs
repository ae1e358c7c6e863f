use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn isq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_isq")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

const TINY: &str = r#"{
  "env": {"kind": "circles", "n": 4, "u": 1, "k": 1, "commands": 1},
  "train": {"total_steps": 60, "batch": 8, "learning_starts": 16, "channels": 4,
            "episode_len": 20, "eval_interval": 30, "eval_episodes": 2, "target_period": 20},
  "seeds": [0, 1]
}"#;

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn trained(dir: &Path) -> (String, PathBuf) {
    let config = write_config(dir, TINY);
    let out = dir.join("out");
    let run = isq(&["train", "--config", &config, "--out", out.to_str().unwrap(), "--plot"]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let manifest = PathBuf::from(stdout(&run).lines().next().unwrap());
    assert!(manifest.exists());
    let ckpt = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.to_string_lossy().ends_with("seed0.ckpt.json"))
        .unwrap();
    (config, ckpt)
}

#[test]
fn train_writes_manifest_curves_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    trained(dir.path());
    let names: Vec<String> = fs::read_dir(dir.path().join("out"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    assert_eq!(names.iter().filter(|n| n.ends_with(".csv")).count(), 3);
    assert!(names.iter().any(|n| n.ends_with(".svg")));
}

#[test]
fn eval_reports_policy_and_random() {
    let dir = tempfile::tempdir().unwrap();
    let (config, ckpt) = trained(dir.path());
    let out = isq(&["eval", "--checkpoint", ckpt.to_str().unwrap(), "--config", &config]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(v["policy"]["samples"].as_array().unwrap().len(), 2);
    assert_eq!(v["random"]["episode_len"], 20);
}

#[test]
fn transfer_uses_the_stored_environment() {
    let dir = tempfile::tempdir().unwrap();
    let (_, ckpt) = trained(dir.path());
    let ck = ckpt.to_str().unwrap();
    let out = isq(&["transfer", "--checkpoint", ck, "--n-test", "12", "--episodes", "2", "--episode-len", "10"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!((v["n_train"].as_u64(), v["n_test"].as_u64()), (Some(4), Some(12)));
    assert_eq!(v["param_count_train"], v["param_count_test"]);
    assert!(v["ei_deviation"].as_f64().unwrap() <= 1e-10);
}

#[test]
fn verify_prints_json_reports() {
    let out = isq(&["verify", "--suite", "lemma", "--seed", "3"]);
    assert_eq!(code(&out), 0);
    let lines: Vec<serde_json::Value> = stdout(&out).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 1);
    assert_eq!(lines[0]["suite"], "lemma");
    assert_eq!(lines[0]["pass"], true);
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&isq(&["verify", "--suite", "everything"])), 2);
    let bad = write_config(dir.path(), r#"{"env": {"kind": "delayed_reward"}, "unknown": 1}"#);
    assert_eq!(code(&isq(&["train", "--config", &bad, "--out", "unused"])), 2);
    assert_eq!(code(&isq(&["train", "--config", "no-such-file.json", "--out", "unused"])), 2);
    let no_out = write_config(dir.path(), r#"{"env": {"kind": "delayed_reward"}}"#);
    assert_eq!(code(&isq(&["train", "--config", &no_out])), 2);
}

#[test]
fn bench_reports_identical_paths() {
    let out = isq(&["bench", "--n-items", "5", "--k-select", "1", "--batch", "4", "--reps", "1"]);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(v["identical"], true);
}
