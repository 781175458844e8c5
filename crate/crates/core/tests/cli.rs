use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const SMALL: &str = "[grid]\nR = 3\nh = 0.5\n[field1]\na_expr = \"0.5\"\n[field2]\na_expr = \"0.5\"\n";

fn run(dir: &Path, args: &[&str]) -> (Output, Value) {
    let config = dir.join("run.toml");
    if !config.exists() {
        std::fs::write(&config, SMALL).unwrap();
    }
    let out = Command::new(env!("CARGO_BIN_EXE_roadfield"))
        .current_dir(dir)
        .arg(args[0])
        .arg(&config)
        .args(&args[1..])
        .output()
        .unwrap();
    if out.stdout.is_empty() {
        return (out, Value::Null);
    }
    let doc = serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&out.stdout))
    });
    (out, doc)
}

fn keys(v: &Value) -> Vec<String> {
    let mut k: Vec<String> = v.as_object().unwrap().keys().cloned().collect();
    k.sort();
    k
}

#[test]
fn eig_document_layout() {
    let dir = tempfile::tempdir().unwrap();
    let (out, doc) = run(dir.path(), &["eig", "--set", "grid.R=4"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(
        keys(&doc),
        ["command", "config_echo", "results", "schema_version", "timings_ms", "tool_version"]
    );
    assert_eq!(doc["schema_version"], 1);
    assert_eq!(doc["command"], "eig");
    assert_eq!(doc["config_echo"]["grid"]["R"], 4.0);
    assert_eq!(keys(&doc["results"]), ["N", "iterations", "lambda", "positivity_margin", "residual"]);
    assert!(doc["results"]["lambda"].as_f64().unwrap() < 0.0);
}

#[test]
fn result_keys_per_command() {
    let dir = tempfile::tempdir().unwrap();
    let expect: [(&str, &[&str]); 5] = [
        ("oracle", &["gap", "lambda_dense", "lambda_iterative"]),
        ("bounds", &["lambda", "lower", "satisfied", "upper_dirichlet", "upper_road"]),
        ("converge", &["extrapolated_limit", "fit_exponent", "lambdas", "monotone_violation", "radii"]),
        ("sweep", &["lambdas", "max_difference_quotient", "monotone_ok", "path", "values"]),
        ("evolve", &["lambda_ref", "rate", "relative_error"]),
    ];
    for (cmd, want) in expect {
        let (out, doc) = run(dir.path(), &[cmd, "--set", "study.radii=[1, 2, 3]", "--set", "evolve.steps=400"]);
        assert_eq!(out.status.code(), Some(0), "{cmd}: {doc}");
        assert_eq!(keys(&doc["results"]), want, "{cmd}");
    }
}

#[test]
fn expression_parse_error_reports_offset() {
    let dir = tempfile::tempdir().unwrap();
    let (out, doc) = run(dir.path(), &["eig", "--set", "field2.a_expr=exp(x"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(doc["error"]["kind"], "parse");
    assert_eq!(doc["error"]["key"], "field2.a_expr");
    assert_eq!(doc["error"]["offset"], 5);
}

#[test]
fn invalid_values_name_their_key() {
    let dir = tempfile::tempdir().unwrap();
    let (out, doc) = run(dir.path(), &["eig", "--set", "road.nu2=-1"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(doc["error"]["kind"], "config");
    assert_eq!(doc["error"]["key"], "road.nu2");

    let (out, doc) = run(dir.path(), &["eig", "--set", "grid.spacing=0.1"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(doc["error"]["kind"], "config");
}

#[test]
fn unverified_condition_exits_with_invariant_code() {
    let dir = tempfile::tempdir().unwrap();
    let (out, doc) = run(dir.path(), &["decay"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(doc["error"]["kind"], "invariant");
    assert_eq!(doc["error"]["check"], "condition_strict");
}

#[test]
fn csv_projection_of_a_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("sweep.json");
    let (out, _) = run(
        dir.path(),
        &[
            "sweep",
            "--set",
            "output.format=csv",
            "--set",
            "study.sweep_path=nu1",
            "--set",
            "study.sweep_values=[0.5, 1, 2]",
            "--output",
            json.to_str().unwrap(),
        ],
    );
    assert_eq!(out.status.code(), Some(0));
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    let text = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("index,parameter_or_radius,lambda,residual,iterations"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 3);
    let lambda: f64 = rows[2].split(',').nth(2).unwrap().parse().unwrap();
    assert_eq!(lambda, doc["results"]["lambdas"][2].as_f64().unwrap());
}

#[test]
fn eigenvector_dump_with_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let (out, doc) = run(dir.path(), &["eig", "--dump-vector", "phi.txt"]);
    assert_eq!(out.status.code(), Some(0));
    let n = doc["results"]["N"].as_u64().unwrap() as usize;
    let values: Vec<f64> = std::fs::read_to_string(dir.path().join("phi.txt"))
        .unwrap()
        .lines()
        .map(|l| l.parse().unwrap())
        .collect();
    assert_eq!(values.len(), n);
    assert!(values.iter().all(|v| *v > 0.0));
    let side: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("phi.txt.json")).unwrap()).unwrap();
    assert_eq!(side["N"], n);
    assert_eq!(side["x"].as_array().unwrap().len(), n);
    assert_eq!(side["component"][0], 0);
}

#[test]
fn identical_runs_give_identical_payloads() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["harnack", "--set", "study.harnack_draws=3", "--set", "grid.R=4", "--set", "study.seed=5"];
    let (_, a) = run(dir.path(), &args);
    let (_, b) = run(dir.path(), &args);
    assert_eq!(a["results"].to_string(), b["results"].to_string());
    assert_eq!(a["config_echo"], b["config_echo"]);
    let (_, c) = run(dir.path(), &["harnack", "--set", "study.harnack_draws=3", "--set", "grid.R=4", "--set", "study.seed=6"]);
    assert_ne!(a["results"]["ratios"], c["results"]["ratios"]);
}

#[test]
fn missing_config_file_is_an_io_error() {
    let out = Command::new(env!("CARGO_BIN_EXE_roadfield"))
        .args(["eig", "/nonexistent/run.toml"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["error"]["kind"], "io");
}
