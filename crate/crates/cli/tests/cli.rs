use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const SMALL: &str = r#"{
  "schema_version": 1,
  "name": "small",
  "seed": 3,
  "basis": {"dim": 1, "n": 4},
  "hierarchy": {"hyper_layers": 1, "kappa0": 1.0, "layers": [{"sigma": 1.0}]},
  "forward": {"kind": "pointwise", "signal": "rect", "points": 32, "noise_sd": 0.1},
  "mcmc": {"iterations": 400, "thinning": 10},
  "output": {"grid": 64}
}"#;

fn mlgp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mlgp"))
        .args(args)
        .env("MLGP_DETERMINISTIC", "1")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn error_kind(out: &Output) -> String {
    let body: Value = serde_json::from_slice(&out.stderr).unwrap();
    body["error"]["kind"].as_str().unwrap().to_string()
}

#[test]
fn run_mcmc_writes_outputs_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let mut reports = Vec::new();
    for run in ["a", "b"] {
        let out_dir = dir.path().join(run);
        let out = mlgp(&["run-mcmc", "--config", &config, "--out", out_dir.to_str().unwrap(), "--chains", "2"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let report: Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(report["chains"].as_array().unwrap().len(), 2);
        assert!(report["posterior_mean"]["l2_error"].as_f64().unwrap() > 0.0);
        assert!(report.get("runtime_seconds").is_none());
        for file in ["chain-0.mlgp", "chain-1.mlgp", "acceptance-0.csv", "posterior.csv", "tikhonov.csv", "report.json"] {
            assert!(out_dir.join(file).exists(), "missing {file}");
        }
        reports.push(fs::read(out_dir.join("chain-1.mlgp")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn summarize_replays_existing_archives() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let out_dir = dir.path().join("run");
    let out_str = out_dir.to_str().unwrap();
    let run: Value = serde_json::from_slice(&mlgp(&["run-mcmc", "--config", &config, "--out", out_str]).stdout).unwrap();
    let out = mlgp(&["summarize", "--config", &config, "--out", out_str]);
    assert!(out.status.success());
    let summary: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["l2_error"], run["posterior_mean"]["l2_error"]);

    // A different seed is a different configuration.
    let out = mlgp(&["summarize", "--config", &config, "--out", out_str, "--seed", "9"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_kind(&out), "config");
}

#[test]
fn zero_iterations_exit_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let out_dir = dir.path().join("run");
    let out = mlgp(&["run-mcmc", "--config", &config, "--out", out_dir.to_str().unwrap(), "--iterations", "0"]);
    assert!(out.status.success());
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["posterior_mean"].is_null());
    assert!(out_dir.join("chain-0.mlgp").exists());
}

#[test]
fn metrics_of_truth_against_itself() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let out_dir = dir.path().join("tik");
    assert!(mlgp(&["tikhonov", "--config", &config, "--out", out_dir.to_str().unwrap()]).status.success());
    let csv = out_dir.join("tikhonov.csv");
    let report_path = dir.path().join("metrics.json");
    let out = mlgp(&[
        "metrics",
        "--recon",
        csv.to_str().unwrap(),
        "--truth",
        csv.to_str().unwrap(),
        "--out",
        report_path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["l2_error"].as_f64(), Some(0.0));
    assert!(report["psnr"].is_null());
    assert!(report_path.exists());
}

#[test]
fn prior_draws_and_sinogram_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let out_dir = dir.path().join("prior");
    let out = mlgp(&["sample-prior", "--config", &config, "--out", out_dir.to_str().unwrap(), "--count", "3"]);
    assert!(out.status.success());
    assert!(out_dir.join("prior.csv").exists());
    let out = mlgp(&["sinogram", "--config", &config, "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success());
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["measurements"].as_u64(), Some(32));
}

#[test]
fn errors_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();

    let unknown = SMALL.replace("\"seed\": 3,", "\"seed\": 3, \"colour\": 1,");
    let config = write_config(dir.path(), &unknown);
    let out = mlgp(&["tikhonov", "--config", &config, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_kind(&out), "config");

    let out = mlgp(&["run-mcmc", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_kind(&out), "config");

    let missing = dir.path().join("nope.json");
    let out = mlgp(&["tikhonov", "--config", missing.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_kind(&out), "io");

    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    fs::write(&a, "x\n1\n2\n").unwrap();
    fs::write(&b, "x\n1\n2\n3\n").unwrap();
    let out = mlgp(&["metrics", "--recon", a.to_str().unwrap(), "--truth", b.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(error_kind(&out), "numerical");

    assert!(mlgp(&["--help"]).status.success());
}
