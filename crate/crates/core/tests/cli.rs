use std::process::Command;

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cavity-lb"))
}

fn run(args: &[&str]) -> (i32, String, String) {
    let out = bin()
        .args(args)
        .env("CAVITY_LB_THREADS", "2")
        .output()
        .unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

fn csv_rows(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers().unwrap().iter().map(String::from).collect();
    let rows = reader
        .records()
        .map(|r| r.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

#[test]
fn analyze_mm1() {
    let (code, out, _) = run(&["analyze", "--policy", "ll:d=1", "--lambda", "0.5"]);
    assert_eq!(code, 0);
    let v: Value = serde_json::from_str(&out).unwrap();
    assert!((v["E[W]"].as_f64().unwrap() - 1.0).abs() < 1e-8);
    for key in ["E[Q]", "E[R]", "E[L]"] {
        assert!(v[key].is_number(), "{key}");
    }
}

#[test]
fn curve_vanishes_at_low_load() {
    let (code, out, _) = run(&[
        "curve",
        "--policy",
        "ll:d=2",
        "--scaling",
        "log1mlambda",
        "--grid",
        "0.05:0.95:0.05",
    ]);
    assert_eq!(code, 0);
    let (header, rows) = csv_rows(&out);
    assert_eq!(
        header,
        ["lambda", "mean_wait", "scaled", "scaling", "policy"]
    );
    assert_eq!(rows.len(), 19);
    let scaled: Vec<f64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
    assert!(scaled[0] < 0.03);
    assert!(scaled.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn logp_scaling_is_flat_for_ll2() {
    let (code, out, _) = run(&[
        "curve",
        "--policy",
        "ll:d=2",
        "--scaling",
        "logplambda",
        "--grid",
        "0.1:0.9:0.1",
    ]);
    assert_eq!(code, 0);
    let scaled: Vec<f64> = csv_rows(&out)
        .1
        .iter()
        .map(|r| r[2].parse().unwrap())
        .collect();
    let max = scaled.iter().cloned().fold(f64::MIN, f64::max);
    let min = scaled.iter().cloned().fold(f64::MAX, f64::min);
    assert!(max / min <= 2.0, "{max} / {min}");
}

#[test]
fn limits_for_ll42() {
    let (code, out, _) = run(&["limits", "--policy", "lldk:d=4,k=2"]);
    assert_eq!(code, 0);
    let v: Value = serde_json::from_str(&out).unwrap();
    assert!((v["heavy_limit"].as_f64().unwrap() - 1.0).abs() < 1e-3);
    assert!((v["low_load_limit"].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-9);
}

#[test]
fn verify_emits_report_array() {
    let (code, out, _) = run(&["verify", "--policy", "ll:d=3"]);
    assert_eq!(code, 0);
    let v: Vec<Value> = serde_json::from_str(&out).unwrap();
    assert!(v.len() >= 7);
    assert!(v.iter().all(|r| r["status"] == "PASS"), "{out}");
}

#[test]
fn compare_reports_majorization() {
    let (code, out, _) = run(&[
        "compare",
        "--policy",
        "mix:d=1,4;p=0.5,0.5",
        "--policy",
        "ll:d=2",
        "--grid",
        "0.3,0.6,0.9",
    ]);
    assert_eq!(code, 0);
    let (header, rows) = csv_rows(&out);
    assert_eq!(header.len(), 6);
    assert_eq!(rows.len(), 3);
    for r in &rows {
        assert_eq!(r[4], "true");
        assert_eq!(r[5], "true");
    }
}

#[test]
fn config_file_and_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.json");
    let out = dir.path().join("sim.json");
    let ccdf = dir.path().join("ccdf.csv");
    std::fs::write(
        &config,
        serde_json::json!({
            "command": "simulate",
            "policy": "ll:d=2",
            "lambda": 0.5,
            "sim": {"n_servers": 200, "horizon": 50.0, "seed": 7, "replications": 2},
            "ccdf_out": ccdf,
        })
        .to_string(),
    )
    .unwrap();
    let (code, stdout, err) = run(&[
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    assert!(stdout.is_empty());
    let report: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report["seed_echo"], 7);
    assert_eq!(report["replication_means"].as_array().unwrap().len(), 2);
    let (header, rows) = csv_rows(&std::fs::read_to_string(&ccdf).unwrap());
    assert_eq!(header, ["w", "fraction"]);
    assert_eq!(rows.len(), 10);

    // Identical seeds reproduce the run.
    let again = dir.path().join("again.json");
    run(&[
        "--config",
        config.to_str().unwrap(),
        "--out",
        again.to_str().unwrap(),
    ]);
    assert_eq!(
        std::fs::read_to_string(&out).unwrap(),
        std::fs::read_to_string(&again).unwrap()
    );
}

#[test]
fn error_stream_and_exit_codes() {
    let (code, out, err) = run(&["analyze", "--policy", "ll:d=2", "--lambda", "1.0"]);
    assert_eq!(code, 1);
    assert!(out.is_empty());
    let v: Value = serde_json::from_str(err.trim()).unwrap();
    assert_eq!(v["error"], "INVALID_LAMBDA");

    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.json");
    std::fs::write(
        &config,
        r#"{"command": "analyze", "policy": "ll:d=2", "lambda": 0.5, "extra": 1}"#,
    )
    .unwrap();
    assert_eq!(run(&["--config", config.to_str().unwrap()]).0, 1);

    std::fs::write(&config, r#"{"command": "analyze", "policy": "ll:d=2", "lambda": 0.9, "solver": {"consistency_tol": 1e-300}}"#)
        .unwrap();
    let (code, _, err) = run(&["--config", config.to_str().unwrap()]);
    assert_eq!(code, 2, "{err}");

    let out = bin()
        .args(["analyze", "--policy", "ll:d=2", "--lambda", "0.5"])
        .env("CAVITY_LB_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn json_round_trips_through_library_types() {
    let (_, out, _) = run(&["limits", "--policy", "mix:d=2,4;p=0.6,0.4"]);
    let report: cavity_lb::limits::LimitReport = serde_json::from_str(&out).unwrap();
    assert_eq!(report.policy.to_string(), "mix:d=2,4;p=0.6,0.4");
    let (_, out, _) = run(&["verify", "--policy", "lldk:d=3,k=2", "--assumption", "4"]);
    let reports: Vec<cavity_lb::assumptions::AssumptionReport> =
        serde_json::from_str(&out).unwrap();
    assert_eq!(reports.len(), 1);
}
