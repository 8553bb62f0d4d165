use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_limitfield")).args(args).output().unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

#[test]
fn help_for_every_subcommand() {
    for sub in [&["--help"][..], &["smooth", "--help"], &["estimate", "--help"], &["solve", "--help"], &["bench", "--help"]] {
        let out = run(sub);
        assert_eq!(out.status.code(), Some(0), "{sub:?}");
        assert!(String::from_utf8_lossy(&out.stdout).contains("Usage"));
    }
}

#[test]
fn parse_errors_exit_2() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["estimate", "hat"]).status.code(), Some(2));
    assert_eq!(run(&["estimate", "nope", "--at", "0"]).status.code(), Some(2));
    assert_eq!(run(&["--config", "/nonexistent/cfg.toml", "bench"]).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_1() {
    // |x| has no gradient at the start point.
    let out = run(&["solve", "hat", "--x0", "0"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("kink"));
    // A wrong dimension is a usage error.
    assert_eq!(run(&["estimate", "hat", "--at", "0,1"]).status.code(), Some(2));
}

#[test]
fn smooth_csv_and_json() {
    let out = run(&["smooth", "absl1", "--points", "5", "--a", "0.5"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("t,"));
    assert_eq!(lines.count(), 5);

    let out = run(&["smooth", "absl1", "--points", "5", "--format", "json"]);
    let v = json(&out);
    assert_eq!(v["schema"], "limitfield/v1");
    assert_eq!(v["command"], "smooth");
}

#[test]
fn estimate_hat_finds_three_limits() {
    let out = run(&["estimate", "hat", "--at", "0"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    let centers: Vec<f64> = v["result"]["clusters"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["center"][0].as_f64().unwrap())
        .collect();
    for want in [-1.0, 0.0, 1.0] {
        assert!(centers.iter().any(|c| (c - want).abs() < 1e-3), "{want} not in {centers:?}");
    }
}

#[test]
fn solve_reports_certificate() {
    let out = run(&["solve", "absl1", "--x0", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["result"]["trace"]["status"], "Converged");
    assert_eq!(v["result"]["certificate"]["critical"], true);

    let out = run(&["solve", "absl1", "--x0", "3", "--max-outer", "2"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn bench_filter_and_tolerance_scale() {
    let out = run(&["bench", "hat"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert!(v["metadata"]["runtime_ms"].is_object() || v["metadata"]["runtime_ms"].is_number());

    let out = run(&["bench", "sin", "--tolerance-scale", "0"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn config_file_sets_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(&cfg, "seed = 11\n").unwrap();
    let a = json(&run(&["--config", cfg.to_str().unwrap(), "estimate", "sin", "--at", "0.5"]));
    let b = json(&run(&["--seed", "11", "estimate", "sin", "--at", "0.5"]));
    assert_eq!(a["result"], b["result"]);
    assert_eq!(a["result"]["seed"], 11);
}
