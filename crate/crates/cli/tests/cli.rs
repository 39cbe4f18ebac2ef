use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ncce(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ncce")).args(args).output().expect("spawn ncce")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("trial.toml");
    fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

const SMALL: &str = "n_elements = 32\nk_paths = 1\nm = 32\nm_cs = 8\nseed = 3\n";

#[test]
fn trial_prints_record_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = ncce(&["trial", "--config", &cfg]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["n"], 32);
    assert_eq!(v["m_cs"], 8);
    assert_eq!(v["success_1db"].as_bool().unwrap(), v["loss_strongest_db"].as_f64().map_or(false, |l| l <= 1.0));
}

#[test]
fn trial_writes_ensemble_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let side = dir.path().join("ensemble.json");
    let out = ncce(&["trial", "--config", &cfg, "--format", "json", "--ensemble-out", side.to_str().unwrap()]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(side).unwrap()).unwrap();
    let codes = v["a_final"].as_array().unwrap();
    assert_eq!(codes.len(), 32 * 32);
    assert!(codes.iter().all(|c| c.as_u64().unwrap() < 4));
    assert_eq!(v["a_cs"].as_array().unwrap().len(), 8 * 32);
    assert_eq!(v["a_pr"][0].as_array().unwrap().len(), 2);
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = ncce(&["trial", "--config", &cfg, "--seed", "99", "--format", "json"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["seed"], 99);
}

#[test]
fn sweep_writes_trials_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let csv = dir.path().join("sweep.csv");
    let out = ncce(&["sweep-mcs", "--config", &cfg, "--mcs", "4,8", "--trials", "5", "--out", csv.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let trials = fs::read_to_string(&csv).unwrap();
    let mut lines = trials.lines();
    assert_eq!(
        lines.next().unwrap(),
        "trial_index,seed,n,k,m,m_cs,loss_strongest_db,success_1db,stage1_converged,freq_err_max,wall_ms"
    );
    assert_eq!(lines.count(), 10);
    let summary = fs::read_to_string(dir.path().join("sweep.summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines[0], "axis_value,trials,success_rate,wilson_lo,wilson_hi,mean_loss_db,median_loss_db");
    assert_eq!(lines.len(), 3);
}

#[test]
fn serial_and_parallel_sweeps_match_after_sort() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let rows = |workers: &str| {
        let out = ncce(&["trial", "--config", &cfg, "--trials", "6", "--workers", workers, "--format", "csv"]);
        assert!(out.status.success());
        let mut rows: Vec<String> = String::from_utf8(out.stdout)
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| l.rsplit_once(',').unwrap().0.to_string())
            .collect();
        rows.sort();
        rows
    };
    assert_eq!(rows("1"), rows("3"));
}

#[test]
fn min_m_reports_ladder() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = ncce(&["min-m", "--config", &cfg, "--trials", "10", "--target", "0.5", "--format", "json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["m_star"].as_u64().is_some());
    assert!(!v["rungs"].as_array().unwrap().is_empty());
}

#[test]
fn scaling_with_coherent_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = ncce(&[
        "scaling", "--config", &cfg, "--trials", "8", "--target", "0.5", "--n-values", "16,32", "--k-values", "1",
        "--coherent",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "n,k,m_star,m_star_coherent,ratio");
    assert_eq!(lines.len(), 3);
}

#[test]
fn validate_passes() {
    let out = ncce(&["validate"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().count() >= 7);
    assert!(text.lines().all(|l| l.starts_with("[PASS]")));
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "n_elements = 32\nm = 10\nm_cs = 8\n");
    assert_eq!(ncce(&["trial", "--config", &bad]).status.code(), Some(1));

    let unknown = write_config(dir.path(), "n_elements = 32\nbogus = 1\n");
    assert_eq!(ncce(&["trial", "--config", &unknown]).status.code(), Some(1));

    assert_eq!(ncce(&["trial", "--config", "/nonexistent/cfg.toml"]).status.code(), Some(1));
    assert_eq!(ncce(&["sweep-mcs", "--mcs", "40", "--trials", "1"]).status.code(), Some(1));
    assert_eq!(ncce(&["trial", "--format", "xml"]).status.code(), Some(1));
}

#[test]
fn unwritable_output_is_runtime_error() {
    let out = ncce(&["trial", "--out", "/nonexistent/dir/out.csv"]);
    assert_eq!(out.status.code(), Some(2));
}
