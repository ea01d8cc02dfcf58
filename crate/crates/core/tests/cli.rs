use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_landscape-lab");

const SHALLOW: &str = r#"{
  "x": {"rows": 2, "cols": 2, "data": [1, 0, 0, 1]},
  "y": {"rows": 2, "cols": 2, "data": [2, 0, 0, 1]},
  "d1": 1,
  "points": [
    {"name": "top", "pattern": {"per_group": [1, 0], "p_bar": 0}},
    {"name": "skip", "pattern": {"per_group": [0, 1], "p_bar": 0}}
  ]
}"#;

fn run(dir: &Path, args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.current_dir(dir).args(args).env_remove("LANDSCAPE_LAB_THREADS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    std::fs::write(dir.join(name), text).unwrap();
    name.to_string()
}

#[test]
fn example1_exits_zero_and_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = run(dir.path(), &["example1", "--out", "a.json", "--seed", "3"], &[]);
    let b = run(dir.path(), &["example1", "--out", "b.json", "--seed", "3"], &[("LANDSCAPE_LAB_THREADS", "1")]);
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(b.status.code(), Some(0));
    let read = |n: &str| std::fs::read(dir.path().join(n)).unwrap();
    assert_eq!(read("a.json"), read("b.json"));
    assert_eq!(read("a.search.csv"), read("b.search.csv"));
    let v: serde_json::Value = serde_json::from_slice(&read("a.json")).unwrap();
    assert_eq!(v["header"]["seed"], 3);
    assert_eq!(v["header"]["tool"], "landscape-lab");
    assert_eq!(v["status"], "ok");
}

#[test]
fn corrupted_golden_exits_four() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["example1", "--out", "r.json", "--perturb-golden", "1e-3"], &[]);
    assert_eq!(out.status.code(), Some(4));
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(v["status"], "golden-mismatch");
}

#[test]
fn shallow_manifest_writes_witness_table() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "m.json", SHALLOW);
    let out = run(
        dir.path(),
        &["shallow", "--input", &input, "--out", "r.json", "--witness", "non-optimal", "--witness", "ascent"],
        &[],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let mut table = csv::Reader::from_path(dir.path().join("r.witnesses.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = table.records().map(|r| r.unwrap()).collect();
    assert!(rows.len() >= 2);
}

#[test]
fn input_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = run(dir.path(), &["shallow", "--input", "nope.json", "--out", "r.json"], &[]);
    assert_eq!(missing.status.code(), Some(2));
    let bad = write(dir.path(), "bad.json", r#"{"x": 1, "unexpected": true}"#);
    let parsed = run(dir.path(), &["shallow", "--input", &bad, "--out", "r.json"], &[]);
    assert_eq!(parsed.status.code(), Some(2));
    let input = write(dir.path(), "m.json", SHALLOW);
    let threads = run(dir.path(), &["shallow", "--input", &input], &[("LANDSCAPE_LAB_THREADS", "zero")]);
    assert_eq!(threads.status.code(), Some(2));
}

#[test]
fn non_critical_weights_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(
        dir.path(),
        "c.json",
        r#"{
  "model": "shallow",
  "x": {"rows": 2, "cols": 2, "data": [1, 0, 0, 1]},
  "y": {"rows": 2, "cols": 2, "data": [2, 0, 0, 1]},
  "weights": [{"name": "random", "layers": [
    {"rows": 1, "cols": 2, "data": [0.3, -0.7]},
    {"rows": 2, "cols": 1, "data": [1.1, 0.4]}
  ]}]
}"#,
    );
    let out = run(dir.path(), &["certify", "--input", &input, "--out", "r.json"], &[]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn cone_violation_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(
        dir.path(),
        "c.json",
        r#"{
  "model": "relu",
  "x": {"rows": 2, "cols": 2, "data": [1, 0, 0, 1]},
  "y": {"rows": 2, "cols": 2, "data": [2, 0, 0, 1]},
  "weights": [{"name": "edge", "layers": [
    {"rows": 1, "cols": 2, "data": [1.0, 0.0]},
    {"rows": 2, "cols": 1, "data": [2.0, 0.0]}
  ]}]
}"#,
    );
    let out = run(dir.path(), &["certify", "--input", &input, "--out", "r.json"], &[]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}
