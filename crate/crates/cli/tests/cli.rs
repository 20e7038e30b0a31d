use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn p2pfl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_p2pfl")).args(args).output().unwrap()
}

fn write(dir: &TempDir, name: &str, v: &Value) -> String {
    let p = dir.path().join(name);
    std::fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p.to_str().unwrap().to_string()
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn bernoulli_node(e: Vec<f64>, truth: Vec<f64>) -> Value {
    json!({
        "instances": { "dist": { "kind": "discrete", "points": [e], "probs": [1.0] } },
        "family": { "kind": "bernoulli", "link": "identity" },
        "truth": truth,
    })
}

/// Two nodes, one coordinate each, four-point Θ.
fn small_discrete(weights: Value) -> Value {
    json!({
        "schema_version": 1,
        "scenario": {
            "graph": { "weights": weights },
            "engine": { "kind": "discrete", "parameters": [[0.8, 0.3], [0.8, 0.6], [0.4, 0.3], [0.4, 0.6]] },
            "nodes": [bernoulli_node(vec![1.0, 0.0], vec![0.8, 0.3]), bernoulli_node(vec![0.0, 1.0], vec![0.8, 0.3])],
            "n_rounds": 30,
            "trials": 3,
            "master_seed": 5,
            "mc_samples": 1,
            "delta": 0.1,
        }
    })
}

fn expect_validation(o: &Output, needle: &str) {
    assert_eq!(o.status.code(), Some(2), "stderr: {}", stderr(o));
    assert!(o.stdout.is_empty());
    assert!(stderr(o).contains(needle), "stderr `{}` lacks `{needle}`", stderr(o));
}

#[test]
fn worked_bound_example() {
    let o = p2pfl(&["bound", configs().join("worked_bound.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stderr.is_empty());
    let v = stdout_json(&o);
    assert_eq!(v["n"], 969);
    assert_eq!(v["assumption_violated"], false);
}

#[test]
fn infinite_separation_bound() {
    let dir = TempDir::new().unwrap();
    let cfg = json!({
        "schema_version": 1,
        "bound_inputs": { "n_nodes": 2, "n_params": 10, "delta": 0.1, "c": 2.0, "k_theta": "inf", "lambda_max": 0.3 }
    });
    let o = p2pfl(&["bound", &write(&dir, "c.json", &cfg)]);
    let v = stdout_json(&o);
    assert_eq!(v["n"], 1);
    assert_eq!(v["k_theta"], "inf");
}

#[test]
fn bound_from_scenario() {
    let o = p2pfl(&["bound", configs().join("three_node_bernoulli.json").to_str().unwrap()]);
    let v = stdout_json(&o);
    assert_eq!(v["n"], 4083);
    assert_eq!(v["n_params"], 10);
}

#[test]
fn overridden_c_flags_the_assumption() {
    let dir = TempDir::new().unwrap();
    let node = |m: Value| {
        json!({
            "instances": { "dist": { "kind": "uniform_box", "low": [-1.0], "high": [1.0] }, "mask": m },
            "family": { "kind": "linear_gaussian", "noise_sd": 0.5 },
            "truth": [0.0, 1.0],
        })
    };
    let mut cfg = json!({
        "schema_version": 1,
        "scenario": {
            "graph": { "weights": [[0.5, 0.5], [0.5, 0.5]] },
            "engine": { "kind": "discrete", "parameters": [[0.0, 1.0], [0.0, -1.0]] },
            "nodes": [node(json!([true])), node(json!([true]))],
            "n_rounds": 10,
            "mc_samples": 100,
            "delta": 0.1,
        }
    });
    let o = p2pfl(&["bound", &write(&dir, "a.json", &cfg)]);
    expect_validation(&o, "c_override");
    cfg["scenario"]["c_override"] = json!(3.0);
    let o = p2pfl(&["bound", &write(&dir, "b.json", &cfg)]);
    let v = stdout_json(&o);
    assert_eq!(v["assumption_violated"], true);
    assert_eq!(v["c"], 3.0);
}

#[test]
fn empty_theta_star_names_global_learnability() {
    let dir = TempDir::new().unwrap();
    let mut cfg = small_discrete(json!([[0.5, 0.5], [0.5, 0.5]]));
    cfg["scenario"]["nodes"] =
        json!([bernoulli_node(vec![1.0, 0.0], vec![0.8, 0.3]), bernoulli_node(vec![1.0, 0.0], vec![0.4, 0.3]),]);
    let o = p2pfl(&["bound", &write(&dir, "c.json", &cfg)]);
    expect_validation(&o, "global learnability");
}

#[test]
fn check_graph_reports_spectrum() {
    let dir = TempDir::new().unwrap();
    let cfg = small_discrete(json!([[0.45, 0.55], [0.70, 0.30]]));
    let o = p2pfl(&["check-graph", &write(&dir, "c.json", &cfg)]);
    assert_eq!(o.status.code(), Some(0));
    let v = stdout_json(&o);
    assert_eq!(v["valid"], true);
    let s = v["stationary"].as_array().unwrap();
    assert!((s[0].as_f64().unwrap() - 0.56).abs() < 1e-12);
    assert!((s[1].as_f64().unwrap() - 0.44).abs() < 1e-12);
    assert!((v["lambda_max"].as_f64().unwrap() - 0.25).abs() < 1e-12);
    assert_eq!(v["mixing_report"]["all_within_bound"], true);
}

#[test]
fn identity_graph_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = small_discrete(json!([[1.0, 0.0], [0.0, 1.0]]));
    let o = p2pfl(&["check-graph", &write(&dir, "a.json", &cfg)]);
    expect_validation(&o, "not strongly connected");
    // Allowed for runs, but check-graph still applies the full contract.
    let mut relaxed = cfg.clone();
    relaxed["scenario"]["graph"]["require_connected"] = json!(false);
    let path = write(&dir, "b.json", &relaxed);
    expect_validation(&p2pfl(&["check-graph", &path]), "not strongly connected");
    let out = dir.path().join("out");
    let o = p2pfl(&["run", &path, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn row_sum_error_has_path() {
    let dir = TempDir::new().unwrap();
    let cfg = small_discrete(json!([[0.6, 0.5], [0.5, 0.5]]));
    expect_validation(&p2pfl(&["run", &write(&dir, "c.json", &cfg)]), "scenario.graph.weights[0]");
}

#[test]
fn delta_out_of_range() {
    let dir = TempDir::new().unwrap();
    let mut cfg = small_discrete(json!([[0.5, 0.5], [0.5, 0.5]]));
    cfg["scenario"]["delta"] = json!(1.5);
    expect_validation(&p2pfl(&["bound", &write(&dir, "c.json", &cfg)]), "scenario.delta");
}

#[test]
fn unknown_key_has_path() {
    let dir = TempDir::new().unwrap();
    let mut cfg = small_discrete(json!([[0.5, 0.5], [0.5, 0.5]]));
    cfg["scenario"]["graph"]["wieghts"] = json!(1);
    expect_validation(&p2pfl(&["bound", &write(&dir, "c.json", &cfg)]), "scenario.graph");
}

#[test]
fn schema_version_and_syntax() {
    let dir = TempDir::new().unwrap();
    let mut cfg = small_discrete(json!([[0.5, 0.5], [0.5, 0.5]]));
    cfg["schema_version"] = json!(2);
    expect_validation(&p2pfl(&["bound", &write(&dir, "v.json", &cfg)]), "schema_version");
    let bad = dir.path().join("s.json");
    std::fs::write(&bad, "{\"schema_version\": 1,\n  \"scenario\": [").unwrap();
    expect_validation(&p2pfl(&["bound", bad.to_str().unwrap()]), "line 2");
}

#[test]
fn unwritable_output_is_a_runtime_error() {
    let dir = TempDir::new().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let cfg = small_discrete(json!([[0.5, 0.5], [0.5, 0.5]]));
    let out = blocker.join("sub");
    let o = p2pfl(&["run", &write(&dir, "c.json", &cfg), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(o.stdout.is_empty());
    assert!(stderr(&o).contains("cannot write"));
}

#[test]
fn missing_config_is_a_runtime_error() {
    let o = p2pfl(&["run", "/nonexistent/config.json"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn run_writes_metrics_and_summary() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "c.json", &small_discrete(json!([[0.5, 0.5], [0.3, 0.7]])));
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let o = p2pfl(&["run", &cfg, "--out", a.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(o.stderr.is_empty());
    p2pfl(&["run", &cfg, "--out", b.to_str().unwrap()]);
    let csv_a = std::fs::read(a.join("metrics.csv")).unwrap();
    assert_eq!(csv_a, std::fs::read(b.join("metrics.csv")).unwrap());
    let text = String::from_utf8(csv_a).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 30 * 3);
    assert!(text.starts_with("trial,round,node,estimate_index,b_0,b_1,b_2,b_3,mse\n"));
    let summary: Value = serde_json::from_slice(&std::fs::read(a.join("summary.json")).unwrap()).unwrap();
    assert!(summary.get("empirical_error").is_some());
    assert_eq!(summary["theta_star"], json!([0]));
    assert!(summary["runtime_seconds"].as_f64().unwrap() >= 0.0);

    let c = dir.path().join("c");
    p2pfl(&["run", &cfg, "--out", c.to_str().unwrap(), "--seed", "6", "--trials", "2", "--format", "json"]);
    let lines = std::fs::read_to_string(c.join("metrics.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 2 * 30 * 2);
    assert_eq!(serde_json::from_str::<Value>(lines.lines().next().unwrap()).unwrap()["round"], 1);
}

#[test]
fn regression_run_writes_baseline() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("o");
    let cfg = configs().join("regression_cooperative.json");
    let o = p2pfl(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--trials", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = std::fs::read_to_string(out.join("metrics.csv")).unwrap().lines().count();
    assert_eq!(rows, 1 + 2 * 2000);
    let base = std::fs::read_to_string(out.join("baseline_metrics.csv")).unwrap().lines().count();
    assert_eq!(base, 1 + 2000);
    let v = stdout_json(&o);
    let floor = v["baseline_final_mse"].as_f64().unwrap();
    assert!((0.64..0.70).contains(&floor));
}

#[test]
fn message_log() {
    let dir = TempDir::new().unwrap();
    let mut cfg = small_discrete(json!([[0.5, 0.5], [0.3, 0.7]]));
    cfg["output"] = json!({ "dir": dir.path().join("m"), "messages": true });
    let o = p2pfl(&["run", &write(&dir, "c.json", &cfg)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let log = std::fs::read_to_string(dir.path().join("m/messages.csv")).unwrap();
    assert_eq!(log.lines().count(), 1 + 3 * 30 * 4);
    for line in log.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f[1], f[4]);
    }
}
