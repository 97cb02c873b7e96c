use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn mel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mel")).args(args).env("MEL_THREADS", "2").output().expect("mel runs")
}

fn stdout_json(o: &Output) -> Value {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).expect("stdout is JSON")
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

/// A quick experiment: small dataset, few epochs.
fn small_config(dir: &Path) -> PathBuf {
    let path = dir.join("small.json");
    let text = r#"{
        "dataset": { "synthetic": { "coarse_classes": 2, "fine_per_coarse": 2, "dim": 4,
                                    "samples_per_fine": 30, "seed": 3 } },
        "ensemble": { "layout": { "upstreams": 2, "block_widths": [4] } },
        "plan": { "epochs": 3, "warmup_epochs": 1, "fine_tune_epochs": 1 },
        "strategies": ["mel", "small"],
        "seeds": [0, 1],
        "family": {
            "arch": { "input_dim": 4, "block_widths": [4, 8], "classes": 4 },
            "options": [{ "tag": "linear", "hidden": [] }]
        },
        "out_dir": "out"
    }"#;
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn gen_writes_every_row_and_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let run = |out: &str| stdout_json(&mel(&["gen", "--config", config.to_str().unwrap(), "--out", out, "--json"]));
    let a = run(dir.path().join("a").to_str().unwrap());
    let b = run(dir.path().join("b").to_str().unwrap());
    assert_eq!(a["rows"], 2 * 2 * 30);
    assert_eq!(a["digest"], b["digest"]);
    let text = std::fs::read_to_string(a["path"].as_str().unwrap()).unwrap();
    assert_eq!(text.lines().count(), 1 + 120);

    let other = stdout_json(&mel(&[
        "gen",
        "--config",
        config.to_str().unwrap(),
        "--seed",
        "4",
        "--out",
        dir.path().join("c").to_str().unwrap(),
        "--json",
    ]));
    assert_ne!(a["digest"], other["digest"]);
}

#[test]
fn train_writes_reports_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let summary = stdout_json(&mel(&["train", "--config", config.to_str().unwrap(), "--json"]));
    assert_eq!(summary["seeds"], serde_json::json!([0, 1]));
    let mel_acc = &summary["mean_test_accuracy"]["mel"];
    for s in ["{1}", "{2}", "{1,2}"] {
        let a = mel_acc[s].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&a), "{s}: {a}");
    }
    assert!(summary["mean_test_accuracy"]["small"]["{1}"].is_f64());

    let run = dir.path().join("out/train/mel/seed-1");
    let report: Value = serde_json::from_str(&std::fs::read_to_string(run.join("report.json")).unwrap()).unwrap();
    for key in ["strategy", "seed", "lambda", "epochs", "test_accuracy", "test_risk", "param_counts", "wall_clock_ms"] {
        assert!(report.get(key).is_some(), "report lacks {key}");
    }
    assert_eq!(report["seed"], 1);
    assert!(run.join("curves.csv").exists() && run.join("model.json").exists());

    // Restricting strategies and seeds on the command line.
    let o = mel(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--strategy",
        "individual",
        "--seed",
        "5",
        "--out",
        dir.path().join("other").to_str().unwrap(),
        "--json",
    ]);
    let summary = stdout_json(&o);
    assert_eq!(summary["seeds"], serde_json::json!([5]));
    assert!(summary["mean_test_accuracy"].get("mel").is_none());
}

#[test]
fn train_rejects_unknown_strategy() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let o = mel(&["train", "--config", config.to_str().unwrap(), "--strategy", "bagging"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn verify_theory_passes_and_reports() {
    let v = stdout_json(&mel(&["verify-theory", "--count", "25", "--seed", "3", "--json"]));
    assert_eq!(v["count"], 25);
    assert_eq!(v["p"].as_array().unwrap().len(), 5);
    assert!(v["max_identity_residual"].as_f64().unwrap() < 1e-9);
    let empty = stdout_json(&mel(&["verify-theory", "--count", "0", "--json"]));
    assert_eq!(empty["max_identity_residual"], 0.0);
}

#[test]
fn family_budget_filters_entries() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let config = config.to_str().unwrap();
    let all = stdout_json(&mel(&["family", "--config", config, "--json"]));
    assert_eq!(all.as_array().unwrap().len(), 2);
    let none = stdout_json(&mel(&["family", "--config", config, "--budget", "0", "--json"]));
    assert_eq!(none, serde_json::json!([]));
    let smallest = all[0]["demand"].as_u64().unwrap();
    let one = stdout_json(&mel(&["family", "--config", config, "--budget", &smallest.to_string(), "--json"]));
    assert_eq!(one.as_array().unwrap().len(), 1);
    assert_eq!(mel(&["family", "--config", config, "--budget", "lots"]).status.code(), Some(2));
}

#[test]
fn simulate_three_server_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = configs().join("three_server.json");
    let run = |policy: &str| {
        stdout_json(&mel(&[
            "simulate",
            "--scenario",
            scenario.to_str().unwrap(),
            "--policy",
            policy,
            "--out",
            dir.path().to_str().unwrap(),
            "--json",
        ]))
    };
    let s = run("best-fit");
    assert_eq!(s["requests"], 181);
    assert_eq!(s["availability"], 1.0);
    assert_eq!(s["subset_usage"]["{1}"], 40);
    assert!(s["split_availability"].as_f64().unwrap() < 1.0);
    let csv = std::fs::read_to_string(dir.path().join("simulate/records.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 181);
    assert!(csv.lines().next().unwrap().starts_with("time"));
    // An explicit placement makes the policy irrelevant.
    assert_eq!(run("worst-fit"), s);
}

#[test]
fn bad_inputs_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    assert_eq!(mel(&["train", "--config", missing.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(mel(&["verify-theory", "--p", "1.5"]).status.code(), Some(2));
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"plan": {"epochs": -1}}"#).unwrap();
    let o = mel(&["gen", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("plan.epochs"));
    // No family section.
    std::fs::write(&bad, "{}").unwrap();
    assert_eq!(mel(&["family", "--config", bad.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn human_output_is_plain_text() {
    let o = mel(&["verify-theory", "--count", "3"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("max |identity residual|"));
    assert!(serde_json::from_str::<Value>(&text).is_err());
}
