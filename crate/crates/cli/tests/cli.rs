use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn spec(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("specs").join(name)
}

fn fkmc(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fkmc")).args(args).arg("--out").arg(out).env("RUST_LOG", "info").output().expect("fkmc runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_json(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn constant_data_solve_returns_one_with_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let s = spec("brownian_unit.toml");
    let o = fkmc(&["solve", "--spec", s.to_str().unwrap(), "--paths", "4000", "--check"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let doc = read_json(dir.path().join("solve.json"));
    let rec = &doc["result"][0];
    assert!((rec["value"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(doc["provenance"]["seed"], 7);
    assert_eq!(doc["provenance"]["paths"], 4000);
    assert_eq!(doc["provenance"]["config_digest"].as_str().unwrap().len(), 16);
    assert_eq!(doc["provenance"]["version"], env!("CARGO_PKG_VERSION"));
}

#[test]
fn smallball_matches_spectral_prediction() {
    let dir = tempfile::tempdir().unwrap();
    let s = spec("brownian_unit.toml");
    let o = fkmc(&["smallball", "--spec", s.to_str().unwrap(), "--eps", "1", "--t", "1", "--format", "csv", "--check"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("smallball.csv")).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# "));
    assert_eq!(lines.next().unwrap(), "eps,t,x,lambda1,prediction,mc_estimate,mc_se,ratio");
    let row: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    // (4/pi) exp(-pi^2/8)
    let exact = 4.0 / std::f64::consts::PI * (-std::f64::consts::PI.powi(2) / 8.0).exp();
    assert!((row[4] - exact).abs() / exact < 1e-3, "prediction {}", row[4]);
    assert!((row[7] - 1.0).abs() < 0.1);
}

#[test]
fn crosscheck_on_bundled_sheet_agrees() {
    let dir = tempfile::tempdir().unwrap();
    let s = spec("sheet_crosscheck.toml");
    let o = fkmc(&["crosscheck", "--spec", s.to_str().unwrap(), "--points", "0.25;0.5;0.75", "--paths", "10000", "--check"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let doc = read_json(dir.path().join("crosscheck.json"));
    assert_eq!(doc["result"]["rows"].as_array().unwrap().len(), 3);
    assert!(doc["result"]["max_rel_gap"].as_f64().unwrap() < 0.03);
}

#[test]
fn hurst_below_half_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(spec("brownian_unit.toml")).unwrap().replace("h0 = 0.8", "h0 = 0.4");
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, text).unwrap();
    let o = fkmc(&["solve", "--spec", bad.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("H0 = 0.4 is outside the open interval (1/2, 1)"), "{}", stderr(&o));
    assert!(!dir.path().join("solve.json").exists());
}

#[test]
fn missing_spec_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = fkmc(&["solve"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--spec is required"));
}

#[test]
fn unknown_acceptance_id_lists_valid_ones() {
    let dir = tempfile::tempdir().unwrap();
    let o = fkmc(&["acceptance", "--only", "99"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("unknown criterion '99'"));
    assert!(err.contains("1 (fk-vs-fd)") && err.contains("11 (determinism)"));
}

#[test]
fn acceptance_subset_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = fkmc(&["acceptance", "--only", "eigen"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("[PASS]  5 eigen"));
    let doc = read_json(dir.path().join("acceptance.json"));
    assert_eq!(doc["result"]["criteria"].as_array().unwrap().len(), 1);
}

#[test]
fn failed_check_exits_with_four() {
    // the narrow box steepens the fitted envelope, so the Brownian bound is violated
    let dir = tempfile::tempdir().unwrap();
    let s = spec("brownian_unit.toml");
    let o = fkmc(&["compare", "--spec", s.to_str().unwrap(), "--check"], dir.path());
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(dir.path().join("compare.json").exists());
    // without --check the same run succeeds
    let o = fkmc(&["compare", "--spec", s.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn reruns_and_worker_counts_are_byte_identical() {
    let s = spec("brownian_unit.toml");
    let run = |workers: &str| {
        let dir = tempfile::tempdir().unwrap();
        let o = fkmc(&["moments", "--spec", s.to_str().unwrap(), "--paths", "1500", "--k", "1,2", "--workers", workers], dir.path());
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        std::fs::read(dir.path().join("moments.json")).unwrap()
    };
    let a = run("1");
    assert_eq!(a, run("1"));
    assert_eq!(a, run("3"));
}

#[test]
fn seed_flag_overrides_spec_and_changes_output() {
    let s = spec("brownian_unit.toml");
    let run = |seed: &str| {
        let dir = tempfile::tempdir().unwrap();
        let o = fkmc(&["moments", "--spec", s.to_str().unwrap(), "--paths", "1500", "--k", "2", "--seed", seed], dir.path());
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        read_json(dir.path().join("moments.json"))
    };
    let (a, b) = (run("1"), run("2"));
    assert_eq!(a["provenance"]["seed"], 1);
    assert_ne!(a["result"][0]["value"], b["result"][0]["value"]);
}
