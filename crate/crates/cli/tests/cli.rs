use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn infofair(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_infofair"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn demo_file(dir: &Path, name: &str) -> String {
    let out = infofair(&["demo", "--name", name]);
    assert!(out.status.success());
    let path = dir.join(format!("{name}.json"));
    std::fs::write(&path, &out.stdout).unwrap();
    path.to_str().unwrap().to_string()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

#[test]
fn audit_reports_figure1_contents() {
    let dir = tempfile::tempdir().unwrap();
    let file = demo_file(dir.path(), "figure1");
    let out = infofair(&["audit", &file, "--group", "all"]);
    assert_eq!(out.status.code(), Some(0));
    let report = json(&out);
    let content = |name: &str| {
        report["predictors"]
            .as_array()
            .unwrap()
            .iter()
            .find(|p| p["predictor"] == name)
            .unwrap()["scopes"][0]["information"]["content"]
            .as_f64()
            .unwrap()
    };
    assert!((content("z") - 1.0 / 6.0).abs() < 1e-12);
    assert!((content("z_prime") - 1.0 / 3.0).abs() < 1e-12);
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let file = demo_file(dir.path(), "groupwise");
    for args in [
        vec!["audit", &file],
        vec!["sweep", &file, "--predictor", "z_prime", "--group", "B", "--points", "11"],
        vec!["optimize", &file, "--predictor", "z", "--objective", "combo", "--h", "fpr", "--tau-u", "0.5", "--tau-l", "0.3"],
        vec!["verify", "--suite", "merge", "--seeds", "5"],
    ] {
        let first = infofair(&args);
        let second = infofair(&args);
        assert_eq!(first.stdout, second.stdout, "{args:?}");
        assert_eq!(first.status.code(), second.status.code());
    }
}

#[test]
fn verify_improve_passes() {
    let out = infofair(&["verify", "--suite", "improve", "--seeds", "100"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let report = json(&out);
    assert_eq!(report["passed"], true);
    assert_eq!(report["checks"], 1200);
}

#[test]
fn other_suites_pass() {
    for suite in ["improv", "identities", "merge", "samples"] {
        let out = infofair(&["verify", "--suite", suite, "--seeds", "20"]);
        assert_eq!(out.status.code(), Some(0), "{suite}: {}", String::from_utf8_lossy(&out.stdout));
    }
}

#[test]
fn unreachable_utility_floor_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let file = demo_file(dir.path(), "caution");
    let out = infofair(&[
        "optimize", &file, "--predictor", "z", "--objective", "impact", "--h", "tpr", "--t-utility", "0.9",
        "--tau-u", "0.7", "--tau-l", "0",
    ]);
    assert_eq!(out.status.code(), Some(3));
    let result = json(&out);
    assert_eq!(result["status"], "infeasible");
    assert_eq!(result["infeasibility"]["checks"][0]["constraint"], "utility_floor");
}

#[test]
fn sweep_emits_csv_with_breakpoints() {
    let dir = tempfile::tempdir().unwrap();
    let file = demo_file(dir.path(), "caution");
    let out = infofair(&["sweep", &file, "--predictor", "z", "--group", "A", "--points", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "beta,tpr,fpr,ppv");
    // Grid 0, 1/2, 1; the only breakpoint of A's curve is 1/2.
    assert_eq!(lines.len(), 4);
    let tpr_at_half: f64 = lines[2].split(',').nth(1).unwrap().parse().unwrap();
    assert_eq!(tpr_at_half, 1.0);
}

#[test]
fn merge_writes_extended_population() {
    let dir = tempfile::tempdir().unwrap();
    let file = demo_file(dir.path(), "figure1");
    let out_path = dir.path().join("merged.json");
    let out = infofair(&["merge", &file, "--z", "z", "--q", "z_prime", "--out", out_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let merged = json(&out);
    let name = merged["predictor"].as_str().unwrap();
    let written: Value = serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    assert!(written["predictors"].get(name).is_some());
    // The merged predictor refines both inputs, so it is at least as
    // informative as either.
    let after = merged["report"]["info_after"].as_f64().unwrap();
    assert!(after >= 1.0 / 3.0 - 1e-12);
    assert!(after >= merged["report"]["guaranteed_gain"].as_f64().unwrap() - 1e-12);
}

#[test]
fn sample_mode_merge_reads_records() {
    let dir = tempfile::tempdir().unwrap();
    let file = demo_file(dir.path(), "figure1");
    let population: Value = serde_json::from_str(&std::fs::read_to_string(&file).unwrap()).unwrap();
    // Every cell observed with outcomes at its true risk rounded to tenths.
    let mut records = String::new();
    for cell in population["cells"].as_array().unwrap() {
        let id = cell["id"].as_str().unwrap();
        let positives = (cell["p_star"].as_f64().unwrap() * 10.0).round() as usize;
        for k in 0..10 {
            records.push_str(&format!("{id},{}\n", u8::from(k < positives)));
        }
    }
    let samples = dir.path().join("samples.csv");
    std::fs::write(&samples, records).unwrap();
    let out = infofair(&[
        "merge", &file, "--z", "z", "--q", "z_prime", "--samples", samples.to_str().unwrap(), "--alpha", "0.1",
        "--delta", "0.05",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let merged = json(&out);
    for cell in merged["report"]["crossed_cells"].as_array().unwrap() {
        assert!(cell["samples"].as_u64().unwrap() >= 10);
        assert!(cell["estimate"].is_number());
    }
}

#[test]
fn usage_and_input_errors_exit_2() {
    assert_eq!(infofair(&["optimize"]).status.code(), Some(2));
    assert_eq!(infofair(&["verify", "--suite", "nope"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"cells": [{"id": "x", "mass": 0.5, "group": "A", "p_star": 0.5}], "predictors": {}}"#)
        .unwrap();
    let out = infofair(&["audit", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "mass-sum");
    let file = demo_file(dir.path(), "figure1");
    let out = infofair(&["audit", &file, "--predictor", "missing"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn pretty_tables() {
    let dir = tempfile::tempdir().unwrap();
    let file = demo_file(dir.path(), "figure1");
    let out = infofair(&["--pretty", "audit", &file, "--predictor", "z", "--group", "A"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("predictor"), "{text}");
    assert!(text.contains("0.166667"), "{text}");
}
