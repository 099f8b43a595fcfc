use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn netform(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_netform"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn config(name: &str) -> String {
    configs().join(name).to_string_lossy().into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL_MC: &str = r#"{
  "scenario": { "preset": 3 },
  "mc": { "n_list": [30, 40], "replications": 3, "base_seed": 17 }
}"#;

#[test]
fn zero_beta_gives_flat_beliefs() {
    let dir = TempDir::new().unwrap();
    let out = netform(&["equilibrium", &config("beta_zero.json"), "--out", s(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("beliefs.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("type,x=-1,x=1"));
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        assert!(cells[1..].iter().all(|c| c.parse::<f64>().unwrap() == 0.5), "{line}");
    }
}

#[test]
fn scenario_equilibrium_reports_tiny_residual() {
    let dir = TempDir::new().unwrap();
    let out = netform(&["equilibrium", &config("scenario1.json"), "--out", s(dir.path())]);
    assert!(out.status.success());
    let diag: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("diagnostics.json")).unwrap()).unwrap();
    assert_eq!(diag["converged"], true);
    assert!(diag["residual"].as_f64().unwrap() <= 1e-12);
}

#[test]
fn missing_config_exits_with_input_error() {
    let dir = TempDir::new().unwrap();
    let out = netform(&["equilibrium", s(&dir.path().join("absent.json")), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_config_key_is_named() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "bad.json", r#"{ "scenario": { "preset": 1, "alpha": 0.3 } }"#);
    let out = netform(&["simulate", &cfg, "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("alpha"));
}

#[test]
fn simulate_is_deterministic_under_seed() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = netform(&["simulate", &config("scenario3.json"), "--seed", "99", "--out", s(out)]);
        assert!(o.status.success());
    }
    for f in ["edges.csv", "attributes.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
    }
    let c = dir.path().join("c");
    assert!(netform(&["simulate", &config("scenario3.json"), "--seed", "100", "--out", s(&c)]).status.success());
    assert_ne!(fs::read(a.join("edges.csv")).unwrap(), fs::read(c.join("edges.csv")).unwrap());
}

#[test]
fn simulated_edge_list_is_bounded() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "s3.json", r#"{ "scenario": { "preset": 3, "n": 50, "seed": 4 } }"#);
    assert!(netform(&["simulate", &cfg, "--out", s(dir.path())]).status.success());
    let edges = fs::read_to_string(dir.path().join("edges.csv")).unwrap();
    let mut lines = edges.lines();
    assert_eq!(lines.next(), Some("src,dst"));
    let rows = lines.count();
    assert!(rows > 0 && rows <= 50 * 49);
    let attrs = fs::read_to_string(dir.path().join("attributes.csv")).unwrap();
    assert_eq!(attrs.lines().next(), Some("agent_id,x_value,a_value"));
    assert_eq!(attrs.lines().count(), 51);
}

#[test]
fn unwritable_output_directory_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    let blocker = write(dir.path(), "plain-file", "");
    let out = netform(&["simulate", &config("scenario3.json"), "--out", &format!("{blocker}/sub")]);
    assert_eq!(out.status.code(), Some(1));
}

fn simulated(dir: &Path, cfg: &str) -> (String, String) {
    assert!(netform(&["simulate", cfg, "--out", s(dir)]).status.success());
    (
        dir.join("edges.csv").to_string_lossy().into_owned(),
        dir.join("attributes.csv").to_string_lossy().into_owned(),
    )
}

#[test]
fn simulate_then_estimate_round_trip() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "s1.json", r#"{ "scenario": { "preset": 1, "n": 250, "seed": 8 } }"#);
    let (edges, attrs) = simulated(dir.path(), &cfg);
    let out = netform(&["estimate", &edges, &attrs, &cfg]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["estimator"], "main");
    assert_eq!(doc["diagnostics"]["converged"], true);
    let beta: Vec<f64> = serde_json::from_value(doc["beta_hat"].clone()).unwrap();
    assert_eq!(beta.len(), 3);
    assert!(beta.iter().all(|b| b.is_finite()));
    assert_eq!(doc["a_hat"].as_array().unwrap().len(), 250);
    assert!(doc.get("inference").is_some());
}

#[test]
fn baseline_and_combined_estimates() {
    let dir = TempDir::new().unwrap();
    let cfg = config("scenario3.json");
    let (edges, attrs) = simulated(dir.path(), &cfg);
    let out = netform(&["estimate", &edges, &attrs, &cfg, "--estimator", "leung"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["estimator"], "leung");
    assert!(doc["intercept"].is_number());

    let file = dir.path().join("both.json");
    let out = netform(&["estimate", &edges, &attrs, &cfg, "--estimator", "both", "--out", s(&file)]);
    assert!(out.status.success());
    let doc: Value = serde_json::from_str(&fs::read_to_string(file).unwrap()).unwrap();
    let names: Vec<&str> = doc["results"].as_array().unwrap().iter().map(|r| r["estimator"].as_str().unwrap()).collect();
    assert_eq!(names, ["main", "leung"]);
}

#[test]
fn truncated_edge_file_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    let cfg = config("scenario3.json");
    let (edges, attrs) = simulated(dir.path(), &cfg);
    let text = fs::read_to_string(&edges).unwrap();
    // cut the last row in half
    let cut = text.trim_end().rfind(',').unwrap();
    let truncated = write(dir.path(), "truncated.csv", &text[..cut]);
    let out = netform(&["estimate", &truncated, &attrs, &cfg]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_agent_in_edges_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    let cfg = config("scenario3.json");
    let (edges, attrs) = simulated(dir.path(), &cfg);
    let mut text = fs::read_to_string(&edges).unwrap();
    text.push_str("0,100000\n");
    let bad = write(dir.path(), "bad.csv", &text);
    assert_eq!(netform(&["estimate", &bad, &attrs, &cfg]).status.code(), Some(1));
}

#[test]
fn non_convergence_exits_with_partial_output() {
    let dir = TempDir::new().unwrap();
    let (edges, attrs) = simulated(dir.path(), &config("scenario3.json"));
    let cfg = write(
        dir.path(),
        "tight.json",
        r#"{ "scenario": { "preset": 3 }, "mle": { "beta_max_iterations": 0 } }"#,
    );
    let out = netform(&["estimate", &edges, &attrs, &cfg]);
    assert_eq!(out.status.code(), Some(2));
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["diagnostics"]["converged"], false);
}

#[test]
fn monte_carlo_output_is_independent_of_workers() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "mc.json", SMALL_MC);
    let (one, eight) = (dir.path().join("w1"), dir.path().join("w8"));
    assert!(netform(&["mc", &cfg, "--workers", "1", "--out", s(&one)]).status.success());
    assert!(netform(&["mc", &cfg, "--workers", "8", "--out", s(&eight)]).status.success());
    for f in ["raw.csv", "summary.csv", "manifest.json"] {
        assert_eq!(fs::read_to_string(one.join(f)).unwrap(), fs::read_to_string(eight.join(f)).unwrap(), "{f}");
    }
    let summary = fs::read_to_string(one.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().next(), Some("estimator,n,coordinate,mean,quantile_sd,failures"));
    assert_eq!(summary.lines().count(), 1 + 2 * 2 * 3);
}

#[test]
fn single_replication_leaves_summary_cells_empty() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "mc1.json",
        r#"{ "scenario": { "preset": 1 }, "mc": { "n_list": [30], "replications": 1, "base_seed": 5, "estimators": ["main"] } }"#,
    );
    assert!(netform(&["mc", &cfg, "--out", s(dir.path())]).status.success());
    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    for line in summary.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!((cells[3], cells[4]), ("", ""), "{line}");
    }
}
