use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn capacc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_capacc"))
        .args(args)
        .env_remove("CAPACC_SEED")
        .output()
        .expect("binary runs")
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_str().unwrap().to_owned()
}

fn json(path: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

const SCENARIO: &str = r#"
n = 200
p = 4
seed = 17

[precision]
kind = "banded"
r = 1
rho = 0.8

[[anomalies]]
s = 60
e = 80
variables = [1, 2]
theta = 4.0
change = "sigma"

[[anomalies]]
s = 140
e = 150
variables = [1, 2, 3, 4]
theta = 5.0
change = "sigma"

[[points]]
t = 20
count = 1
size_sd = 8.0
"#;

fn write_scenario(dir: &TempDir) -> String {
    let p = path(dir, "scenario.toml");
    std::fs::write(&p, SCENARIO).unwrap();
    p
}

#[test]
fn constant_rows_give_an_empty_report() {
    let dir = TempDir::new().unwrap();
    let input = path(&dir, "flat.csv");
    let mut text = String::from("a,b,c\n");
    for _ in 0..50 {
        text.push_str("1.5,-2,0\n");
    }
    std::fs::write(&input, text).unwrap();
    let out = capacc(&["detect", "--input", &input]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["collective"], Value::Array(vec![]));
    assert_eq!(report["points"], Value::Array(vec![]));
    assert_eq!(report["n"], 50);
}

#[test]
fn simulate_detect_evaluate_pipeline() {
    let dir = TempDir::new().unwrap();
    let scenario = write_scenario(&dir);
    let (data, truth) = (path(&dir, "data.csv"), path(&dir, "truth.json"));
    let out = capacc(&["simulate", "--scenario", &scenario, "--output", &data, "--truth", &truth]);
    assert_eq!(out.status.code(), Some(0));

    let mut reports = Vec::new();
    for (i, threads) in ["1", "3"].iter().enumerate() {
        let report = path(&dir, &format!("report{i}.json"));
        let out = capacc(&["--threads", threads, "detect", "--input", &data, "--b", "2", "--output", &report]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        reports.push(report);
    }
    let first = std::fs::read(&reports[0]).unwrap();
    assert_eq!(first, std::fs::read(&reports[1]).unwrap());

    let eval = path(&dir, "eval.json");
    let out = capacc(&["evaluate", "--truth", &truth, "--report", &reports[0], "--output", &eval]);
    assert_eq!(out.status.code(), Some(0));
    let ari = json(&eval)["ari"].as_f64().unwrap();
    assert!(ari > 0.5, "ARI {ari}");

    // a rerun reproduces every byte
    let again = path(&dir, "again.csv");
    capacc(&["simulate", "--scenario", &scenario, "--output", &again]);
    assert_eq!(std::fs::read(&data).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn simulate_seed_override_changes_data() {
    let dir = TempDir::new().unwrap();
    let scenario = write_scenario(&dir);
    let a = capacc(&["simulate", "--scenario", &scenario]);
    let b = Command::new(env!("CARGO_BIN_EXE_capacc"))
        .args(["simulate", "--scenario", &scenario])
        .env("CAPACC_SEED", "18")
        .output()
        .unwrap();
    assert_eq!(b.status.code(), Some(0));
    assert_ne!(a.stdout, b.stdout);
}

#[test]
fn tune_hits_the_target_rate() {
    let dir = TempDir::new().unwrap();
    let mut outputs = Vec::new();
    for threads in ["1", "2"] {
        let out_path = path(&dir, &format!("tune{threads}.json"));
        let out = capacc(&[
            "--threads", threads, "tune", "--n", "100", "--p", "5", "--reps", "300", "--seed", "9", "--output", &out_path,
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        outputs.push(std::fs::read(&out_path).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let report: Value = serde_json::from_slice(&outputs[0]).unwrap();
    let alpha = report["alpha_hat"].as_f64().unwrap();
    assert!((0.03..=0.07).contains(&alpha), "α̂ {alpha}");
    assert!(report["b"].as_f64().unwrap() > 0.0);
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let missing = path(&dir, "missing.csv");
    assert_eq!(capacc(&["detect"]).status.code(), Some(1));
    assert_eq!(capacc(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(capacc(&["--help"]).status.code(), Some(0));
    assert_eq!(capacc(&["detect", "--input", &missing]).status.code(), Some(2));

    let bad = path(&dir, "bad.csv");
    std::fs::write(&bad, "x,y\n1,2\n3,oops\n").unwrap();
    let out = capacc(&["detect", "--input", &bad]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("oops"));

    let nan = path(&dir, "nan.csv");
    std::fs::write(&nan, "x,y\n1,2\nNaN,3\n").unwrap();
    assert_eq!(capacc(&["detect", "--input", &nan]).status.code(), Some(2));

    let good = path(&dir, "good.csv");
    std::fs::write(&good, "x,y\n1,2\n3,4\n5,7\n").unwrap();
    assert_eq!(capacc(&["detect", "--input", &good, "--min-len", "1"]).status.code(), Some(1));

    // a precision matrix that is not positive definite
    let q = path(&dir, "q.csv");
    std::fs::write(&q, "x,y\n1,2\n2,1\n").unwrap();
    assert_eq!(capacc(&["detect", "--input", &good, "--precision", &q]).status.code(), Some(3));

    // constant columns leave no robust scale to estimate from
    let flat = path(&dir, "flat.csv");
    std::fs::write(&flat, "x,y,z\n1,1,1\n1,1,1\n1,1,1\n").unwrap();
    assert_eq!(capacc(&["detect", "--input", &flat, "--precision", "estimate"]).status.code(), Some(3));
}

#[test]
fn estimate_then_detect_with_the_fit() {
    let dir = TempDir::new().unwrap();
    let scenario = write_scenario(&dir);
    let data = path(&dir, "data.csv");
    capacc(&["simulate", "--scenario", &scenario, "--output", &data]);
    let (q, summary) = (path(&dir, "q.csv"), path(&dir, "summary.json"));
    let out = capacc(&["estimate", "--input", &data, "--adjacency", "banded:1", "--output", &q, "--summary", &summary]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json(&summary)["bandwidth"], 1);
    let out = capacc(&["detect", "--input", &data, "--precision", &q, "--adjacency", "banded:1", "--b", "2"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(!report["collective"].as_array().unwrap().is_empty());
}

#[test]
fn cpt_finds_a_mean_shift() {
    let dir = TempDir::new().unwrap();
    let input = path(&dir, "shift.csv");
    let mut text = String::from("a,b\n");
    for t in 0..60 {
        let level = if t < 40 { 0.0 } else { 4.0 };
        let wiggle = ((t * 7919) % 13) as f64 / 13.0 - 0.5;
        text.push_str(&format!("{},{}\n", level + wiggle, -wiggle));
    }
    std::fs::write(&input, text).unwrap();
    let out = capacc(&["cpt", "--input", &input, "--precision", "identity", "--baseline", "zero"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    let taus: Vec<u64> = report["changepoints"].as_array().unwrap().iter().map(|c| c["tau"].as_u64().unwrap()).collect();
    assert!(taus.contains(&40), "{taus:?}");
}

#[test]
fn power_curves_from_a_study() {
    let dir = TempDir::new().unwrap();
    let scenario = path(&dir, "study.toml");
    std::fs::write(
        &scenario,
        r#"
n = 60
p = 3
seed = 5

[precision]
kind = "banded"
r = 1
rho = 0.9

[[anomalies]]
s = 30
e = 40
variables = [1]
theta = 1.0
change = "sigma"

[study]
parameter = "demo"
thetas = [0.5, 3.0]
reps = 100
tune_reps = 100
methods = [
  { name = "true", model = { kind = "true" }, statistic = "known" },
  { name = "identity", model = { kind = "identity" }, statistic = "known" },
]
"#,
    )
    .unwrap();
    let curves = path(&dir, "curves.csv");
    let out = capacc(&["evaluate", "--scenario", &scenario, "--emit-curves", &curves]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&curves).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("method,parameter,theta,power"));
    let rows: Vec<_> = lines.collect();
    assert_eq!(rows.len(), 4);
    for row in &rows {
        let power: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&power));
    }
    assert!(Path::new(&curves).exists());
}
