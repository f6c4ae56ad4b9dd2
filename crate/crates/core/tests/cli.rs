use std::path::Path;
use std::process::{Command, Output};

fn rps(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rps"))
        .args(args)
        .current_dir(cwd)
        .env_remove("RPS_EMBEDDING_ENDPOINT")
        .output()
        .expect("rps binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "rps failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn gen_corpus_writes_requested_cases() {
    let dir = tempfile::tempdir().unwrap();
    ok(&rps(
        &["gen-corpus", "--cases", "7", "--seed", "3", "--out", "c.json"],
        dir.path(),
    ));
    let cases = rps_core::dialogue::load_corpus(dir.path().join("c.json")).unwrap();
    assert_eq!(cases.cases.len(), 7);
}

#[test]
fn gmm_random_run_then_plot() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "gmm-train",
        "--agent",
        "random",
        "--seed",
        "0,1",
        "--threads",
        "1",
        "--out",
        "runs",
    ];
    ok(&rps(&args, dir.path()));
    let method = dir.path().join("runs/gmm-random");
    for file in ["final_metrics.csv", "summary.json", "config.toml"] {
        assert!(method.join(file).is_file(), "missing {file}");
    }
    assert!(!method.join("train_metrics.csv").exists(), "baselines do not train");
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(method.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["per_seed"].as_array().unwrap().len(), 2);

    let input = format!("random={}", method.join("final_metrics.csv").display());
    ok(&rps(
        &[
            "plot",
            "--input",
            &input,
            "--metric",
            "kl_divergence",
            "--out",
            "kl.svg",
        ],
        dir.path(),
    ));
    let svg = std::fs::read_to_string(dir.path().join("kl.svg")).unwrap();
    assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));
    assert_eq!(svg.matches("class=\"legend-entry\"").count(), 1);
}

#[test]
fn dialogue_fixed_strategy_run() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "dialogue-train",
        "--agent",
        "fixed:precise",
        "--seed",
        "5",
        "--out",
        "runs",
    ];
    ok(&rps(&args, dir.path()));
    let summary = std::fs::read_to_string(dir.path().join("runs/dialogue-fixed-precise/summary.json")).unwrap();
    assert!(summary.contains("\"per_seed\""));
}

#[test]
fn invalid_arguments_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let out = rps(&["gmm-train", "--profile", "huge"], dir.path());
    assert!(!out.status.success());

    let out = rps(&["plot", "--input", "x=missing.csv", "--out", "p.svg"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}
