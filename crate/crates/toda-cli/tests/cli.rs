use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn toda(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_toda"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn statuses(report: &Value) -> Vec<String> {
    report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["status"].as_str().unwrap().to_string())
        .collect()
}

#[test]
fn reversed_window_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    for window in ["b:a", "10:-10", "5:5"] {
        let out = toda(dir.path(), &["background", "--window", window, "--csv", "bg.csv"]);
        assert_eq!(out.status.code(), Some(2), "{window}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("window:"));
    }
    assert!(!dir.path().join("bg.csv").exists());
}

#[test]
fn all_field_errors_are_listed() {
    let dir = tempfile::tempdir().unwrap();
    let out = toda(dir.path(), &["evolve", "--kappa", "0", "--dt", "0.4", "--tol", "oops"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    for field in ["kappa:", "dt:", "tol:"] {
        assert!(err.contains(field), "{err}");
    }
}

#[test]
fn default_modes_check_passes_and_echoes_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = toda(dir.path(), &["modes-check", "--out", "r.json"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let r = json(&dir.path().join("r.json"));
    assert_eq!(r["command"], "modes-check");
    assert_eq!(r["config"]["window"], "-40:88");
    assert_eq!(r["config"]["kappa"], 1.0);
    assert_eq!(statuses(&r), ["pass"]);
    assert!(r["diagnostics"]["tail.eta=0.2"].as_f64().unwrap() < 1e-6);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.cfg"), "# test\nkappa = 1.3\nalpha = 0.4\nwindow = -20:30\n").unwrap();
    let out = toda(dir.path(), &["background", "--config", "run.cfg", "--kappa", "0.8", "--out", "r.json"]);
    assert_eq!(out.status.code(), Some(0));
    let c = &json(&dir.path().join("r.json"))["config"];
    assert_eq!(c["kappa"], 0.8);
    assert_eq!(c["alpha"], 0.4);
    assert_eq!(c["window"], "-20:30");
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.cfg"), "kapa = 1\n").unwrap();
    let out = toda(dir.path(), &["background", "--config", "run.cfg"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1: unknown key `kapa`"));
}

#[test]
fn same_seed_gives_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &'static str| {
        vec![
            "evolve", "--eta", "0.3", "--seed", "7", "--T", "6", "--dt", "0.01", "--window", "-30:40",
            "--project-secular", "--out", out,
        ]
    };
    assert_eq!(toda(dir.path(), &args("a.csv")).status.code(), Some(0));
    assert_eq!(toda(dir.path(), &args("b.csv")).status.code(), Some(0));
    let a = std::fs::read(dir.path().join("a.csv")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("b.csv")).unwrap());
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("t,norm,pairing1,pairing2,edge_fraction\n"));
    assert_eq!(text.lines().count(), 8);
}

#[test]
fn different_seeds_differ() {
    let dir = tempfile::tempdir().unwrap();
    for (seed, out) in [("1", "a.csv"), ("2", "b.csv")] {
        let args = ["evolve", "--seed", seed, "--T", "2", "--dt", "0.01", "--window", "-30:40", "--out", out];
        assert_ne!(toda(dir.path(), &args).status.code(), Some(2));
    }
    assert_ne!(
        std::fs::read(dir.path().join("a.csv")).unwrap(),
        std::fs::read(dir.path().join("b.csv")).unwrap()
    );
}

#[test]
fn decay_fit_reads_evolve_series() {
    let dir = tempfile::tempdir().unwrap();
    let evolve = [
        "evolve", "--eta", "0.4", "--T", "20", "--dt", "0.01", "--window", "-40:70", "--project-secular", "--out",
        "s.csv", "--report", "e.json",
    ];
    assert_eq!(toda(dir.path(), &evolve).status.code(), Some(0));
    let out = toda(dir.path(), &["decay-fit", "--in", "s.csv", "--T", "20", "--out", "fit.json"]);
    assert_ne!(out.status.code(), Some(2));
    let fit = json(&dir.path().join("fit.json"));
    let from_evolve = json(&dir.path().join("e.json"));
    assert_eq!(fit["results"]["rate"], from_evolve["results"]["rate"]);
    assert!(fit["results"]["rate"].as_f64().unwrap() > 0.0);
}

#[test]
fn decay_fit_needs_norm_column() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.csv"), "t,value\n0e0,1e0\n").unwrap();
    let out = toda(dir.path(), &["decay-fit", "--in", "bad.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing column `norm`"));
    assert_eq!(toda(dir.path(), &["decay-fit"]).status.code(), Some(2));
}

#[test]
fn suite_subset_reports_each_check_once() {
    let dir = tempfile::tempdir().unwrap();
    let out = toda(dir.path(), &["suite", "--checks", "1,3", "--out", "s.json", "--csv", "s.csv"]);
    assert_eq!(out.status.code(), Some(0));
    let r = json(&dir.path().join("s.json"));
    let names: Vec<&str> = r["checks"].as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap()).collect();
    assert_eq!(names.len(), 2);
    assert!(names[0].starts_with("[1]") && names[1].starts_with("[3]"));
    assert_eq!(statuses(&r), ["pass", "pass"]);
    let csv = std::fs::read_to_string(dir.path().join("s.csv")).unwrap();
    assert!(csv.starts_with("id,check,status,metric,value,tolerance\n"));
    assert_eq!(toda(dir.path(), &["suite", "--checks", "99"]).status.code(), Some(2));
}

#[test]
fn failed_check_exits_one_and_still_writes() {
    let dir = tempfile::tempdir().unwrap();
    // a tolerance no residual can meet
    let out = toda(dir.path(), &["dispersion-scan", "--tol", "identity=1e-300", "--out", "r.json", "--csv", "d.csv"]);
    assert_eq!(out.status.code(), Some(1));
    let r = json(&dir.path().join("r.json"));
    assert!(statuses(&r).contains(&"fail".to_string()));
    assert_eq!(r["config"]["tolerances"]["identity"], 1e-300);
    assert!(dir.path().join("d.csv").exists());
}

#[test]
fn complex_columns_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = toda(dir.path(), &["dispersion-scan", "--eta-max", "0.5", "--step", "0.25", "--csv", "d.csv"]);
    assert_ne!(out.status.code(), Some(2));
    let text = std::fs::read_to_string(dir.path().join("d.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "eta,w_re,w_im,mu_re,mu_im,beta_plus_re,beta_plus_im,beta_minus_re,beta_minus_im,gamma_re,gamma_im,delta_re,delta_im"
    );
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 5);
    // β₊β₋ = 1 survives the text round trip
    for r in &rows {
        let (bp, bm) = (num_complex::Complex64::new(r[5], r[6]), num_complex::Complex64::new(r[7], r[8]));
        assert!((bp * bm - 1.0).norm() < 1e-12);
    }
}

#[test]
fn darboux_above_threshold_checks_counts_only() {
    let dir = tempfile::tempdir().unwrap();
    let out = toda(dir.path(), &["darboux-check", "--eta", "2.5", "--out", "d.json"]);
    assert_eq!(out.status.code(), Some(0));
    let r = json(&dir.path().join("d.json"));
    assert_eq!(r["config"]["window"], "-50:70");
    assert!(r["results"]["darboux"][0].get("inverse").is_none());
}
