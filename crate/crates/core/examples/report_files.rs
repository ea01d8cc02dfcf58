//! Writes a shallow report and its witness table from an inline manifest.

use landscape_lab::report::{run, Command, RunOptions, WitnessRequest};

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("shallow.json");
    std::fs::write(
        &manifest,
        r#"{
  "x": {"rows": 2, "cols": 2, "data": [1, 0, 0, 1]},
  "y": {"rows": 2, "cols": 2, "data": [2, 0, 0, 1]},
  "d1": 1,
  "points": [
    {"name": "top", "pattern": {"per_group": [1, 0], "p_bar": 0}},
    {"name": "skip", "pattern": {"per_group": [0, 1], "p_bar": 0}}
  ]
}"#,
    )
    .unwrap();
    let mut opts = RunOptions::new(Command::Shallow, dir.path().join("report.json"));
    opts.input = Some(manifest);
    opts.witness = vec![WitnessRequest::NonOptimal, WitnessRequest::Ascent];
    let out = run(&opts).unwrap();
    println!("status {:?}", out.status);
    println!("{}", std::fs::read_to_string(out.table.unwrap()).unwrap());
}
