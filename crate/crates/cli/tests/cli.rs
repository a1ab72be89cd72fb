use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn ddm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ddm"))
        .args(args)
        .env_remove("DDM_THREADS")
        .output()
        .expect("run ddm")
}

fn json_file(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn signal_simulate_posterior_ball_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let sig = dir.path().join("sig.json");
    let data = dir.path().join("data.json");
    let out = ddm(&["signal", "--kind", "sobolev-boundary", "--beta", "1", "--q", "1", "--n", "128", "--out", path_str(&sig)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json_file(&sig)["coeffs"].as_array().unwrap().len(), 128);

    let out = ddm(&["simulate", "--signal", path_str(&sig), "--eps", "0.05", "--p", "0.5", "--seed", "4", "--out", path_str(&data)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let post = stdout_json(&ddm(&["posterior", "--data", path_str(&data)]));
    let weights = post["weights"].as_array().unwrap();
    let total: f64 = weights.iter().map(|w| w.as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-12);
    assert!(post["eb_index"].as_u64().unwrap() >= 1);
    assert_eq!(post["mean"].as_array().unwrap().len(), 128);

    let shrunk = stdout_json(&ddm(&["posterior", "--data", path_str(&data), "--variant", "full-bayes-shrunk"]));
    assert_eq!(shrunk["variant"], "full-bayes-shrunk");

    let ball = stdout_json(&ddm(&["ball", "--data", path_str(&data), "--mc", "1000", "--inflation", "2"]));
    assert!(ball["radius"]["value"].as_f64().unwrap() > 0.0);
    assert_eq!(ball["ball"]["inflation"].as_f64().unwrap(), 2.0);
    let again = stdout_json(&ddm(&["ball", "--data", path_str(&data), "--mc", "1000", "--inflation", "2"]));
    assert_eq!(ball, again);
}

#[test]
fn classify_zero_signal() {
    let dir = tempfile::tempdir().unwrap();
    let sig = dir.path().join("zero.json");
    assert!(ddm(&["signal", "--kind", "zero", "--n", "64", "--out", path_str(&sig)]).status.success());
    let c = stdout_json(&ddm(&["classify", "--signal", path_str(&sig), "--eps", "0.1", "--p", "0"]));
    assert_eq!(c["oracle"]["i_star"], 1);
    assert!((c["oracle"]["rate_sq"].as_f64().unwrap() - 0.01).abs() < 1e-15);
    assert_eq!(c["ebr"]["member"], true);
    assert_eq!(c["pt"]["member"], true);
}

#[test]
fn verify_constants_passes() {
    let out = ddm(&["verify-constants", "--p", "1", "--nmax", "2000"]);
    let v = stdout_json(&out);
    assert!(v["sigma"]["violations"].as_array().unwrap().is_empty());
    assert_eq!(v["ball_volume_checks"], 600);
    assert!(v["params"]["kappa0"].as_f64().unwrap() > 0.15);
}

fn run_dir(root: &Path, kind: &str) -> PathBuf {
    let entries: Vec<_> = std::fs::read_dir(root.join(kind)).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(entries.len(), 1);
    entries.into_iter().next().unwrap()
}

#[test]
fn experiment_writes_a_timestamped_run_and_honours_check() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("over.json");
    std::fs::write(&cfg, r#"{"kind": "overshrinkage", "reps": 4}"#).unwrap();
    let out_root = dir.path().join("results");
    let out = ddm(&["experiment", "--config", path_str(&cfg), "--out", path_str(&out_root), "--check", "--threads", "2"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("PASS mixture-near-truth"));
    let run = run_dir(&out_root, "overshrinkage");
    assert!(run.join("cells.csv").is_file());
    assert!(run.join("report.json").is_file());
    assert!(run.join("plots").is_dir());
}

#[test]
fn failed_check_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("oi.json");
    std::fs::write(
        &cfg,
        r#"{"kind": "oracle-inequality", "n_trunc": 128, "reps": 4, "epsilons": [0.1],
            "calibration": {"ratio_bound": 1e-9}}"#,
    )
    .unwrap();
    let root = dir.path().join("r");
    let out = ddm(&["experiment", "--config", path_str(&cfg), "--out", path_str(&root), "--check"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL ratio-bounded"));
    // Without --check the run itself still succeeds.
    let out = ddm(&["experiment", "--config", path_str(&cfg), "--out", path_str(&root)]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn bad_input_exits_with_one() {
    assert_eq!(ddm(&["simulate", "--bogus"]).status.code(), Some(1));
    assert_eq!(ddm(&["experiment", "--kind", "nope"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"kind": "contraction", "reps": 0}"#).unwrap();
    let out = ddm(&["experiment", "--config", path_str(&cfg), "--out", path_str(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("reps"));
    let missing = ddm(&["posterior", "--data", "/nonexistent/data.json"]);
    assert_eq!(missing.status.code(), Some(1));
    assert_eq!(ddm(&["--help"]).status.code(), Some(0));
}

#[test]
fn thread_count_from_environment() {
    let out = Command::new(env!("CARGO_BIN_EXE_ddm"))
        .args(["verify-constants", "--nmax", "100"])
        .env("DDM_THREADS", "1")
        .output()
        .unwrap();
    assert!(out.status.success());
    let bad = Command::new(env!("CARGO_BIN_EXE_ddm"))
        .args(["verify-constants", "--nmax", "100"])
        .env("DDM_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));
}
