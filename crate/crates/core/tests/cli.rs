mod common;

use std::process::Command;

use common::*;

fn falcur() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_falcur"));
    cmd.env("RUST_LOG", "warn");
    cmd
}

#[test]
fn validate_accepts_a_good_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_synthetic(dir.path(), 60, "");
    let out = falcur().args(["validate", "--config"]).arg(&cfg).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok: 60 rows"));
}

#[test]
fn run_reports_a_missing_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_synthetic(dir.path(), 60, "\"dataset\": \"gone.csv\"");
    let out = falcur().args(["run", "--config"]).arg(&cfg).arg("--out").arg(dir.path().join("o")).output().unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("gone.csv") && err.contains("No such file"), "{err}");
}

#[test]
fn invalid_input_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_synthetic(dir.path(), 60, "\"beta\": 3");
    assert!(!falcur().args(["validate", "--config"]).arg(&cfg).output().unwrap().status.success());
    assert!(!falcur().args(["run", "--bogus"]).output().unwrap().status.success());
    let good = write_synthetic(dir.path(), 60, "");
    let status = falcur()
        .args(["sweep", "--param", "depth", "--values", "1", "--config"])
        .arg(&good)
        .arg("--out")
        .arg(dir.path().join("s"))
        .output()
        .unwrap();
    assert!(!status.status.success());
}

#[test]
fn run_writes_result_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_synthetic(dir.path(), 80, "");
    let out_dir = dir.path().join("out");
    let status = falcur()
        .args(["run", "--trace", "--dump-clusters", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .env("FALCUR_THREADS", "2")
        .status()
        .unwrap();
    assert!(status.success());
    for f in ["records.csv", "summary.csv", "final.csv", "config.echo", "trace.jsonl", "clusters/run1_iter3.csv"] {
        assert!(out_dir.join(f).is_file(), "{f}");
    }
    let trace = std::fs::read_to_string(out_dir.join("trace.jsonl")).unwrap();
    assert_eq!(trace.lines().count(), 2 * 3 * 10);
}

#[test]
fn beta_sweep_writes_one_summary_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_synthetic(dir.path(), 60, "\"runs\": 1, \"iterations\": 1");
    let out_dir = dir.path().join("sweep");
    let values = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1";
    let status = falcur()
        .args(["sweep", "--param", "beta", "--values", values, "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .status()
        .unwrap();
    assert!(status.success());
    let summaries = std::fs::read_dir(&out_dir)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().join("summary.csv").is_file())
        .count();
    assert_eq!(summaries, 11);
    let table = std::fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    assert_eq!(table.lines().count(), 12);
    assert!(table.starts_with("beta,accuracy_final_mean"));
}
