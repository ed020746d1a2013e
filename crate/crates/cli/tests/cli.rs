//! End-to-end behaviour of the `blase` binary.

use std::path::Path;
use std::process::{Command, Output};

fn blase(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_blase")).current_dir(dir).args(args).output().unwrap()
}

fn small_config(dir: &Path) {
    std::fs::write(
        dir.join("c.toml"),
        "[scenario]\npreset = \"HSHF\"\npairs = 200\ntest_size = 50\nreplications = 1\n\n[chain]\niterations = 10\nburnin = 0\nthin = 1\n",
    )
    .unwrap();
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn impossible_fault_level_is_a_validation_error() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("c.toml"), "[scenario]\npreset = \"HSHF\"\nfault_level = 1.5\n").unwrap();
    let out = blase(d.path(), &["--config", "c.toml", "generate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!d.path().join("out").exists());
}

#[test]
fn unknown_keys_and_missing_inputs_exit_with_two() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("c.toml"), "[chain]\nwarmup = 3\n").unwrap();
    assert_eq!(blase(d.path(), &["--config", "c.toml", "generate"]).status.code(), Some(2));
    assert_eq!(blase(d.path(), &["--config", "absent.toml", "generate"]).status.code(), Some(2));
    assert_eq!(blase(d.path(), &["run", "--input", "nowhere"]).status.code(), Some(2));
    assert_eq!(blase(d.path(), &["metrics"]).status.code(), Some(2));
}

#[test]
fn short_gazm_run_writes_a_trace_without_error_rates() {
    let d = tempfile::tempdir().unwrap();
    small_config(d.path());
    assert!(blase(d.path(), &["--config", "c.toml", "--out", "data", "generate"]).status.success());
    let rep = d.path().join("data").join("rep_000");
    for f in ["F1.csv", "F2.csv", "truth.csv", "test.csv", "scenario.json"] {
        assert!(rep.join(f).is_file(), "{f}");
    }
    let out = blase(d.path(), &["--config", "c.toml", "--model", "gazm", "--out", "gm", "run", "--input", "data"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let res = d.path().join("gm").join("rep_000");
    let summary = read_json(&res.join("summary.json"));
    assert!(summary.get("gamma").is_none());
    assert_eq!(summary["stored_draws"], 10);
    let trace = std::fs::read_to_string(res.join("trace.csv")).unwrap();
    let lines: Vec<&str> = trace.lines().collect();
    assert_eq!(lines.len(), 11);
    assert!(!lines[0].contains("gamma"));

    let out = blase(d.path(), &["--config", "c.toml", "--model", "blase", "--out", "bl", "run", "--input", "data"]);
    assert!(out.status.success());
    let summary = read_json(&d.path().join("bl").join("rep_000").join("summary.json"));
    assert_eq!(summary["gamma"].as_array().unwrap().len(), 1);
}

#[test]
fn metrics_of_one_method_has_no_comparison() {
    let d = tempfile::tempdir().unwrap();
    small_config(d.path());
    assert!(blase(d.path(), &["--config", "c.toml", "--out", "data", "generate"]).status.success());
    assert!(blase(d.path(), &["--config", "c.toml", "--out", "bl", "run", "--input", "data"]).status.success());
    let out = blase(d.path(), &["--out", "m", "metrics", "bl"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(d.path().join("m").join("metrics.csv").is_file());
    assert!(!d.path().join("m").join("comparison.csv").exists());
}

#[test]
fn generate_depends_only_on_the_seed() {
    let d = tempfile::tempdir().unwrap();
    small_config(d.path());
    let read = |dir: &str| std::fs::read(d.path().join(dir).join("rep_000").join("F2.csv")).unwrap();
    for (out, seed) in [("a", "5"), ("b", "5"), ("c", "6")] {
        assert!(blase(d.path(), &["--config", "c.toml", "--seed", seed, "--out", out, "generate"]).status.success());
    }
    assert_eq!(read("a"), read("b"));
    assert_ne!(read("a"), read("c"));
}
