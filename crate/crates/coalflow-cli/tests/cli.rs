//! End-to-end command-line checks: smoke runs, determinism across worker
//! counts, and validation ordering.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_coalflow"))
}

fn tmp(name: &str) -> PathBuf {
    Path::new(env!("CARGO_TARGET_TMPDIR")).join(name)
}

fn run_ok(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = bin();
    cmd.args(args);
    if let Some(t) = threads {
        cmd.env("COALFLOW_THREADS", t);
    }
    let out = cmd.output().expect("spawn coalflow");
    assert!(
        out.status.success(),
        "command failed: {:?}\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

#[test]
fn scbm_smoke_writes_expected_files() {
    let dir = tmp("scbm_smoke");
    run_ok(
        &[
            "run",
            "scbm",
            "--m",
            "2",
            "--rho",
            "1",
            "--T",
            "0.1",
            "--dt",
            "0.01",
            "--n",
            "50",
            "--seed",
            "7",
            "--out",
            dir.to_str().unwrap(),
        ],
        None,
    );
    for file in [
        "scbm/paths.csv",
        "scbm/paths_summary.json",
        "scbm/covariation_1_2.csv",
        "scbm/manifest.json",
        "scbm/report.jsonl",
    ] {
        assert!(dir.join(file).exists(), "missing {file}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("scbm/manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["config"]["n"], 50);
}

#[test]
fn outputs_are_byte_identical_across_worker_counts() {
    let dir_a = tmp("det_a");
    let dir_b = tmp("det_b");
    let args = |out: &Path| {
        vec![
            "run".to_string(),
            "scsm".into(),
            "--mu".into(),
            "(0,1)".into(),
            "--sigma".into(),
            "const:1".into(),
            "--cutoff".into(),
            "0.1".into(),
            "--T".into(),
            "0.3".into(),
            "--dt".into(),
            "0.05".into(),
            "--n".into(),
            "60".into(),
            "--seed".into(),
            "11".into(),
            "--out".into(),
            out.to_str().unwrap().into(),
        ]
    };
    let args_a = args(&dir_a);
    let args_b = args(&dir_b);
    run_ok(
        &args_a.iter().map(String::as_str).collect::<Vec<_>>(),
        Some("1"),
    );
    run_ok(
        &args_b.iter().map(String::as_str).collect::<Vec<_>>(),
        Some("4"),
    );
    // every data file matches byte-for-byte; the manifest differs only in
    // wall time and is excluded
    for file in [
        "scsm/measure_path.csv",
        "scsm/measure_path_summary.json",
        "scsm/report.jsonl",
    ] {
        let a = std::fs::read(dir_a.join(file)).unwrap();
        let b = std::fs::read(dir_b.join(file)).unwrap();
        assert_eq!(a, b, "file {file} differs across worker counts");
    }
}

#[test]
fn unbounded_sigma_is_rejected_before_simulation() {
    let dir = tmp("bad_sigma");
    let out = bin()
        .args([
            "run",
            "scsm",
            "--sigma",
            "const:0",
            "--out",
            dir.to_str().unwrap(),
        ])
        .output()
        .expect("spawn");
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("bounded below"), "stderr: {stderr}");
    assert!(!dir.join("scsm").exists(), "no outputs may be written");
}

#[test]
fn dual_check_emits_duality_report() {
    let dir = tmp("dual_smoke");
    run_ok(
        &[
            "run",
            "dual-check",
            "--m",
            "2",
            "--T",
            "0.3",
            "--sigma",
            "const:1",
            "--mu",
            "(-1,1),(1,1)",
            "--n",
            "400",
            "--dt",
            "0.01",
            "--seed",
            "3",
            "--out",
            dir.to_str().unwrap(),
        ],
        None,
    );
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.join("dual-check/duality.json")).unwrap(),
    )
    .unwrap();
    assert!(report["report"]["z_score"].as_f64().unwrap().is_finite());
    assert_eq!(report["report"]["moment_order"], 2);
    assert_eq!(report["config"]["mu"], "(-1,1),(1,1)");
}

#[test]
fn scaling_emits_ks_table() {
    let dir = tmp("scaling_smoke");
    run_ok(
        &[
            "run",
            "scaling",
            "--thetas",
            "1,4",
            "--phi",
            "gauss",
            "--T",
            "0.3",
            "--cutoff",
            "0.1",
            "--dt",
            "0.01",
            "--mu",
            "(-0.5,1),(0.5,1)",
            "--sigma",
            "bump:1,1",
            "--n",
            "200",
            "--seed",
            "5",
            "--out",
            dir.to_str().unwrap(),
        ],
        None,
    );
    let table = std::fs::read_to_string(dir.join("scaling/ks_table.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert!(lines[0].starts_with("# seed=5"));
    assert_eq!(lines[1], "theta,phi_id,ks,n,seed");
    // 2 thetas x (gauss + pair_distance)
    assert_eq!(lines.len(), 2 + 4);
}

#[test]
fn check_subcommand_runs_selected_criteria() {
    let dir = tmp("check_smoke");
    let out = run_ok(
        &[
            "check",
            "--suite",
            "fast",
            "--criteria",
            "9",
            "--out",
            dir.to_str().unwrap(),
        ],
        None,
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("criterion 9"), "stdout: {stdout}");
    assert!(dir.join("report.jsonl").exists());
}
