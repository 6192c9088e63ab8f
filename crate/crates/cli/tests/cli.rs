use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn hardmax(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hardmax")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

#[test]
fn planar_run_writes_svg_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"tokens": [[-1, 1], [0, 3], [12, 4]], "alpha": 0.5}"#);
    let out = dir.path().join("run");
    let out = out.to_str().unwrap();
    assert!(hardmax(&["simulate", &cfg, "--out", out]).status.success());
    let svg = std::fs::read_to_string(Path::new(out).join("scatter.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("leader"));
    assert!(!Path::new(out).join("pairs.csv").exists());

    assert_eq!(hardmax(&["analyze", out]).status.code(), Some(0));
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(Path::new(out).join("report.json")).unwrap()).unwrap();
    assert_eq!(report["leaders"].as_array().unwrap().len(), 2);
}

#[test]
fn input_and_math_errors_have_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let out = out.to_str().unwrap();
    let bad = write(dir.path(), "bad.json", r#"{"tokens": [[1, 2], [3]], "alpha": 0.5}"#);
    assert_eq!(hardmax(&["simulate", &bad, "--out", out]).status.code(), Some(1));
    let indefinite = write(dir.path(), "a.json", r#"{"tokens": [[1, 0]], "A": [[1, 2], [2, 1]], "alpha": 0.5}"#);
    assert_eq!(hardmax(&["simulate", &indefinite, "--out", out]).status.code(), Some(2));
    assert_eq!(hardmax(&["analyze", dir.path().join("missing").to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn softmax_runs_cannot_be_analyzed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg =
        write(dir.path(), "s.json", r#"{"tokens": [[0.3], [1.0], [-0.4]], "alpha": 1, "mode": "softmax", "tau": 0.1}"#);
    let out = dir.path().join("run");
    let out = out.to_str().unwrap();
    assert!(hardmax(&["simulate", &cfg, "--out", out]).status.success());
    assert!(Path::new(out).join("pairs.csv").exists());
    assert_eq!(hardmax(&["analyze", out]).status.code(), Some(1));
}

#[test]
fn train_predict_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("planted.tsv");
    let data = data.to_str().unwrap();
    let model = dir.path().join("m.bin");
    let model = model.to_str().unwrap();
    let history = dir.path().join("h.csv");
    assert!(hardmax(&["corpus", "--out", data, "--reviews", "40"]).status.success());
    let trained = hardmax(&[
        "train",
        "--data",
        data,
        "--model",
        model,
        "--len",
        "16",
        "--epochs",
        "3",
        "--batch",
        "8",
        "--history",
        history.to_str().unwrap(),
    ]);
    assert!(trained.status.success(), "{}", String::from_utf8_lossy(&trained.stderr));
    assert_eq!(std::fs::read_to_string(&history).unwrap().lines().count(), 4);
    assert!(Path::new(&format!("{model}.vocab")).exists());

    let p = hardmax(&["predict", "--model", model, "--text", "superb brilliant", "--trace"]);
    assert!(p.status.success());
    let v: Value = serde_json::from_slice(&p.stdout).unwrap();
    let yhat = v["yhat"].as_f64().unwrap();
    assert!(yhat > 0.0 && yhat < 1.0);
    assert_eq!(v["label"].as_u64().unwrap(), u64::from(yhat >= 0.5));
    assert_eq!(v["tokens"].as_array().unwrap().len(), 16);

    let e = hardmax(&["evaluate", "--model", model, "--data", data, "--mode", "softmax"]);
    let v: Value = serde_json::from_slice(&e.stdout).unwrap();
    assert!(v["leaderStats"]["mean"].as_f64().unwrap() >= 1.0);

    assert_eq!(hardmax(&["predict", "--model", data, "--text", "x"]).status.code(), Some(1));
}
