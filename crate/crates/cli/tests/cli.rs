//! End-to-end runs of the `mixflow` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn run(args: &[&str], config: &str, dir: &Path) -> Output {
    let cfg = dir.join("config.json");
    fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_mixflow"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap()
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("out/report.json")).unwrap()).unwrap()
}

const SMALL_SUITE: &str = r#"{"suite": {"two_s_grid": [0.5, 2.0], "kmp_max_order": 4, "reservoir_max_n": 10,
    "moment_max_n": 8, "poisson_max_m": 4, "quadrature_max_degree": 20}}"#;

#[test]
fn verify_default_suite_passes() {
    let dir = TempDir::new().unwrap();
    let out = run(&["verify"], r#"{"command": "verify"}"#, dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(dir.path());
    assert_eq!(r["pass"], true);
    assert!(r["families"].as_array().unwrap().len() >= 6);
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("verify:"));
}

#[test]
fn verify_unreachable_tolerance_fails() {
    let dir = TempDir::new().unwrap();
    let cfg = SMALL_SUITE.replacen('{', r#"{"tolerance": 1e-30, "#, 1);
    let out = run(&["verify"], &cfg, dir.path());
    assert_eq!(out.status.code(), Some(4));
    let r = report(dir.path());
    assert_eq!(r["pass"], false);
    assert!(r["failures"].as_u64().unwrap() > 0);
}

#[test]
fn malformed_config_is_a_parse_error() {
    let dir = TempDir::new().unwrap();
    for cfg in [r#"{"seed": 1,,}"#, r#"{"unknown_block": 1}"#, r#"{"command": "ness"}"#] {
        let out = run(&["verify"], cfg, dir.path());
        assert_eq!(out.status.code(), Some(2), "{cfg}");
    }
    assert!(!dir.path().join("out").exists());
}

#[test]
fn missing_output_directory_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, SMALL_SUITE).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_mixflow")).args(["verify", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

const KMP_PAIR: &str =
    r#""model": {"vertices": ["1", "2"], "edges": [["1", "2", 1.0]], "family": "KMP_DISCRETE", "two_s": 1.0}"#;

#[test]
fn simulate_at_time_zero_writes_one_row() {
    let dir = TempDir::new().unwrap();
    let cfg = format!(r#"{{{KMP_PAIR}, "init": [3, 0], "budgets": {{"t_end": 0.0}}}}"#);
    let out = run(&["simulate"], &cfg, dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("out/trajectory.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines, vec!["t,1,2", "0,3,0"]);
}

#[test]
fn simulate_conserves_particles_and_summarizes_ensemble() {
    let dir = TempDir::new().unwrap();
    let cfg = format!(r#"{{{KMP_PAIR}, "init": [3, 0], "budgets": {{"t_end": 5.0, "n_traj": 20}}, "seed": 3}}"#);
    let out = run(&["simulate"], &cfg, dir.path());
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("out/trajectory.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let v: Vec<u64> = line.split(',').skip(1).map(|x| x.parse().unwrap()).collect();
        assert_eq!(v.iter().sum::<u64>(), 3);
    }
    let r = report(dir.path());
    assert_eq!(r["ensemble"][0]["observable"], "total");
    assert_eq!(r["ensemble"][0]["mean"], 3.0);
}

#[test]
fn simulate_rejects_bad_models_and_states() {
    let dir = TempDir::new().unwrap();
    let disconnected = r#"{"model": {"vertices": ["1", "2", "3"], "edges": [["1", "2", 1.0]], "family": "KMP_DISCRETE", "two_s": 1.0}}"#;
    assert_eq!(run(&["simulate"], disconnected, dir.path()).status.code(), Some(2));
    let fractional = format!(r#"{{{KMP_PAIR}, "init": [1.5, 0]}}"#);
    assert_eq!(run(&["simulate"], &fractional, dir.path()).status.code(), Some(2));
}

#[test]
fn simulate_separates_config_and_runtime_failures() {
    let dir = TempDir::new().unwrap();
    let cfg = format!(r#"{{{KMP_PAIR}, "init": [3, 0], "budgets": {{"t_end": -1.0}}}}"#);
    assert_eq!(run(&["simulate"], &cfg, dir.path()).status.code(), Some(2));
    let bad_eps = format!(r#"{{{KMP_PAIR}, "numerics": {{"epsilon": 2.0}}}}"#);
    assert_eq!(run(&["simulate"], &bad_eps, dir.path()).status.code(), Some(2));
    let capped =
        format!(r#"{{{KMP_PAIR}, "init": [3, 0], "numerics": {{"rate_cap": 1e-3}}, "budgets": {{"t_end": 1.0}}}}"#);
    assert_eq!(run(&["simulate"], &capped, dir.path()).status.code(), Some(3));
}

const HIDDEN_CHAIN: &str = r#"{"command": "ness", "seed": 11,
    "experiment": {"kind": "chain", "family": "HIDDEN_HARMONIC", "n": 3, "two_s": 1.0, "theta_left": 0.0, "theta_right": 1.0}}"#;

#[test]
fn ness_hidden_chain_reports_site_means() {
    let dir = TempDir::new().unwrap();
    let out = run(&["ness"], HIDDEN_CHAIN, dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let r = report(dir.path());
    let means: Vec<&Value> = r["comparisons"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["name"].as_str().unwrap().starts_with("mean_"))
        .collect();
    assert_eq!(means.len(), 3);
    for (m, target) in means.iter().zip([0.25, 0.5, 0.75]) {
        assert!((m["target"].as_f64().unwrap() - target).abs() < 1e-12);
    }
}

#[test]
fn same_config_gives_identical_reports() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    assert_eq!(run(&["ness"], HIDDEN_CHAIN, a.path()).status.code(), Some(0));
    let out = Command::new(env!("CARGO_BIN_EXE_mixflow"))
        .args(["ness", "--workers", "3", "--config"])
        .arg(a.path().join("config.json"))
        .arg("--out")
        .arg(b.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let ra = fs::read(a.path().join("out/report.json")).unwrap();
    let rb = fs::read(b.path().join("out/report.json")).unwrap();
    assert_eq!(ra, rb);
}

#[test]
fn seed_flag_overrides_config() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    run(&["ness"], HIDDEN_CHAIN, a.path());
    let cfg = a.path().join("config.json");
    Command::new(env!("CARGO_BIN_EXE_mixflow"))
        .args(["ness", "--seed", "12", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(b.path().join("out"))
        .output()
        .unwrap();
    let (ra, rb) = (report(a.path()), report(b.path()));
    assert_eq!(rb["seed"], 12);
    assert_ne!(ra["comparisons"][0]["estimate"], rb["comparisons"][0]["estimate"]);
}

#[test]
fn ness_rejects_wrong_family() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"{"experiment": {"kind": "chain", "family": "SIP", "n": 2, "two_s": 1.0, "theta_left": 0.0, "theta_right": 1.0}}"#;
    assert_eq!(run(&["ness"], cfg, dir.path()).status.code(), Some(2));
    assert_eq!(run(&["ness"], r#"{"experiment": {"kind": "sip_bep"}}"#, dir.path()).status.code(), Some(2));
}

#[test]
fn ness_irw_poisson_product() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"{"seed": 5, "experiment": {"kind": "irw_poisson"},
        "model": {"vertices": ["1"], "edges": [], "couplings": [["1", 1.0]], "family": "IRW", "two_s": 1.0,
                  "reservoirs": {"1": {"alpha": 2.0, "gamma": 4.0}}},
        "budgets": {"burn_in": 10.0, "n_samples": 20000, "thinning": 2.0, "chains": 4}}"#;
    let out = run(&["ness"], cfg, dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let r = report(dir.path());
    assert_eq!(r["comparisons"][0]["name"], "mean_1");
    assert!((r["comparisons"][0]["target"].as_f64().unwrap() - 0.5).abs() < 1e-12);
}

#[test]
fn sweep_epsilon_levels() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"{"seed": 2, "sweep": {"kind": "epsilon", "n": 1, "two_s": 1.0, "theta_left": 0.0, "theta_right": 1.0,
        "epsilons": [1e-3, 1e-4]}, "budgets": {"burn_in": 20.0, "n_samples": 20000, "thinning": 2.0, "chains": 4}}"#;
    let out = run(&["sweep"], cfg, dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let r = report(dir.path());
    assert_eq!(r["levels"].as_array().unwrap().len(), 2);
    assert!(r["comparisons"].as_array().unwrap().iter().all(|c| c["test"] == "SWEEP"));
}

#[test]
fn sweep_needs_two_levels() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"{"sweep": {"kind": "epsilon", "n": 1, "two_s": 1.0, "theta_left": 0.0, "theta_right": 1.0, "epsilons": [1e-3]}}"#;
    assert_eq!(run(&["sweep"], cfg, dir.path()).status.code(), Some(3));
}

#[test]
fn sample_mixing_writes_sorted_samples() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"{"seed": 4, "mixing": {"n_sites": 3, "two_s": 1.0, "theta_left": 0.0, "theta_right": 1.0},
        "budgets": {"n_samples": 20000}}"#;
    let out = run(&["sample-mixing"], cfg, dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let csv = fs::read_to_string(dir.path().join("out/samples.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("theta_1,theta_2,theta_3"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 20000);
    assert!(rows.iter().all(|r| r.windows(2).all(|w| w[0] <= w[1]) && r[0] >= 0.0 && r[2] <= 1.0));
    let r = report(dir.path());
    assert_eq!(r["comparisons"].as_array().unwrap().len(), 3);
}

#[test]
fn bad_subcommand_usage_exits_two() {
    let out = Command::new(env!("CARGO_BIN_EXE_mixflow")).arg("verify").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
