//! End-to-end runs of the `cvmdi` binary.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn cvmdi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cvmdi"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_ok(args: &[&str]) -> String {
    let out = cvmdi(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json(args: &[&str]) -> Value {
    serde_json::from_str(&stdout_ok(args)).unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL_SIM: [&str; 7] = ["simulate", "--m", "500", "--trials", "40", "--seed", "9"];
const SMALL_SWEEP: [&str; 3] = ["sweep", "--bob-db", "0:6:4"];

#[test]
fn identity_channel_rate() {
    let v = json(&[
        "rate",
        "--tau-a",
        "1",
        "--tau-b",
        "1",
        "--attack",
        "pure-loss",
        "--xi",
        "1",
        "--v-m",
        "4",
        "--asymptotic",
    ]);
    let a = &v["result"]["asymptotic"];
    assert!(a["holevo_bound"].as_f64().unwrap().abs() < 1e-8);
    let k = v["result"]["key_rate"].as_f64().unwrap();
    assert!((k - a["mutual_information"].as_f64().unwrap()).abs() < 1e-8);
    assert_eq!(v["result"]["positive_rate"], true);
}

#[test]
fn reference_point_rate_is_of_order_a_percent_or_more() {
    let v = json(&["rate", "--bob-db", "2"]);
    let k = v["result"]["key_rate"].as_f64().unwrap();
    assert!((1e-2..=1.0).contains(&k), "K = {k}");
    let finite = &v["result"]["finite"];
    assert!(finite["breakdown"]["delta"].as_f64().unwrap() > 0.0);
    assert!(finite["estimation"]["tau_a_low"].as_f64().unwrap() < 0.98);
    assert!(v["result"]["optimization"]["v_m_star"].as_f64().is_some());
}

#[test]
fn no_positive_rate_is_not_an_error() {
    let v = json(&["rate", "--tau-a", "1e-6", "--bob-db", "60", "--n-bar", "1e6"]);
    assert_eq!(v["result"]["positive_rate"], false);
    assert!(v["result"]["key_rate"].as_f64().unwrap() <= 0.0);
}

#[test]
fn configuration_errors_exit_with_2() {
    for args in [
        &["sweep", "--bob-db", "0:1:0"][..],
        &["rate", "--tau-a", "1.5"],
        &["rate", "--xi", "2", "--v-m", "3", "--asymptotic"],
        &["simulate", "--trials", "0"],
        &["modscan", "--v-m", "0:10:3"],
        &["rate", "--no-such-flag"],
        &["--from-metadata", "/nonexistent/file.csv"],
    ] {
        let out = cvmdi(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn invalid_field_is_named() {
    let out = cvmdi(&["rate", "--tau-a", "1.5"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("tau"));
}

#[test]
fn repeated_runs_are_byte_identical() {
    assert_eq!(stdout_ok(&SMALL_SIM), stdout_ok(&SMALL_SIM));
    assert_eq!(stdout_ok(&SMALL_SWEEP), stdout_ok(&SMALL_SWEEP));
    let other_seed = ["simulate", "--m", "500", "--trials", "40", "--seed", "10"];
    assert_ne!(stdout_ok(&SMALL_SIM), stdout_ok(&other_seed));
}

#[test]
fn outputs_rerun_from_embedded_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let runs: [&[&str]; 6] = [
        &SMALL_SIM,
        &SMALL_SWEEP,
        &["modscan", "--v-m", "1:1000:5", "--xi", "0.95"],
        &["optimize", "--asymptotic", "--format", "csv"],
        &["rate", "--bob-db", "4", "--v-m", "12"],
        &["simulate", "--m", "200", "--trials", "5", "--format", "csv"],
    ];
    for (i, args) in runs.iter().enumerate() {
        let first = dir.path().join(format!("first{i}"));
        let second = dir.path().join(format!("second{i}"));
        let mut a = args.to_vec();
        a.extend(["--out", path_str(&first)]);
        stdout_ok(&a);
        stdout_ok(&["--from-metadata", path_str(&first), "--out", path_str(&second)]);
        assert_eq!(
            std::fs::read(&first).unwrap(),
            std::fs::read(&second).unwrap(),
            "{args:?}"
        );
    }
}

#[test]
fn csv_layout() {
    let text = stdout_ok(&SMALL_SWEEP);
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# generator: cvmdi"));
    assert!(lines.next().unwrap().starts_with("# config: {"));
    let header = lines.next().unwrap();
    assert!(header.starts_with("attenuation_db,k_asymptotic,k_N1e9,k_N1e6,v_m_star,r_star"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 4);
    for row in rows {
        let cells: Vec<f64> = row.split(',').map(|c| c.parse().unwrap()).collect();
        assert!(cells[8] <= cells[7] && cells[7] <= cells[6], "{row}");
        if cells[3] > 0.0 {
            assert!(cells[3] <= cells[2] && cells[2] <= cells[1], "{row}");
        }
        assert_eq!(cells[8], cells[3].max(0.0));
    }
}

#[test]
fn symmetric_sweep_keeps_ordering() {
    let text = stdout_ok(&["sweep", "--common-db", "0:2:5"]);
    for row in text.lines().skip(3) {
        let c: Vec<f64> = row.split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(c[9], c[10]);
        assert!(c[8] <= c[7] && c[7] <= c[6], "{row}");
        if c[3] > 0.0 {
            assert!(c[3] <= c[2] && c[2] <= c[1], "{row}");
        }
    }
}

#[test]
fn single_point_modscan() {
    let text = stdout_ok(&["modscan", "--v-m", "5:5:1"]);
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[1].starts_with("5,"));
}

#[test]
fn one_trial_reports_insufficient_data() {
    let v = json(&["simulate", "--m", "100", "--trials", "1"]);
    assert_eq!(v["result"]["insufficient_data"], true);
    let checks = v["result"]["checks"].as_array().unwrap();
    assert!(checks
        .iter()
        .filter(|c| c["statistic"] == "variance")
        .all(|c| c["status"] == "insufficient-data"));
}

#[test]
fn dumped_dataset_feeds_the_rate_command() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    stdout_ok(&[
        "simulate",
        "--m",
        "20000",
        "--trials",
        "1",
        "--dump-dataset",
        path_str(&data),
    ]);
    let header = std::fs::read_to_string(&data).unwrap();
    assert!(header.lines().any(|l| l == "a_q,a_p,b_q,b_p,r_q,r_p"));
    let v = json(&["rate", "--dataset", path_str(&data), "--v-m", "10", "--n-bar", "1e7"]);
    let est = &v["result"]["finite"]["estimation"];
    let tau_a = est["tau_a_hat"].as_f64().unwrap();
    assert!((tau_a - 0.98).abs() < 0.1, "{tau_a}");
    assert!(v["result"]["key_rate"].as_f64().is_some());
}
