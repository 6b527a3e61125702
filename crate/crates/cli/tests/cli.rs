use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn quotes() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/sample_quotes.csv")
}

fn motbounds(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_motbounds"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn read_json(path: PathBuf) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

fn perturbed_quotes(dir: &Path) -> PathBuf {
    let text = std::fs::read_to_string(quotes()).unwrap().replace("2,100,6\n", "2,100,5.9\n");
    let path = dir.join("bad.csv");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn marginals_from_quotes() {
    let dir = TempDir::new().unwrap();
    let o = motbounds(dir.path(), &["marginals", "--input", quotes().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let ms = read_json(dir.path().join("marginals.json"));
    assert_eq!(ms.as_array().unwrap().len(), 3);
}

#[test]
fn arbitrage_needs_repair() {
    let dir = TempDir::new().unwrap();
    let bad = perturbed_quotes(dir.path());
    let o = motbounds(dir.path(), &["marginals", "--input", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(dir.path().join("violations.json").exists());

    let o = motbounds(dir.path(), &["marginals", "--input", bad.to_str().unwrap(), "--repair"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = read_json(dir.path().join("repair_report.json"));
    let cost = report["l1_cost"].as_f64().unwrap();
    assert!((cost - 0.1).abs() < 1e-9, "cost {cost}");
}

#[test]
fn empty_input_is_a_parse_error() {
    let dir = TempDir::new().unwrap();
    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "").unwrap();
    let o = motbounds(dir.path(), &["marginals", "--input", empty.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
}

#[test]
fn missing_input_is_an_io_error() {
    let dir = TempDir::new().unwrap();
    let o = motbounds(dir.path(), &["marginals", "--input", "/nonexistent/q.csv"]);
    assert_eq!(code(&o), 1);
    let o = motbounds(dir.path(), &["bound", "--payoff", "straddle"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn straddle_bounds_with_and_without_the_middle_date() {
    let dir = TempDir::new().unwrap();
    let q = quotes();
    let o = motbounds(dir.path(), &["bound", "--input", q.to_str().unwrap(), "--payoff", "straddle"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = read_json(dir.path().join("bound.json"))["objective"].as_f64().unwrap();
    assert!((v - 31.63).abs() < 0.01, "{v}");
    assert!(dir.path().join("gap.csv").exists());

    let o = motbounds(
        dir.path(),
        &["bound", "--input", q.to_str().unwrap(), "--payoff", "straddle", "--marginals", "1,3"],
    );
    assert_eq!(code(&o), 0);
    let v = read_json(dir.path().join("bound.json"))["objective"].as_f64().unwrap();
    assert!((v - 28.13).abs() < 0.01, "{v}");
}

#[test]
fn bad_date_selection_is_rejected() {
    let dir = TempDir::new().unwrap();
    let q = quotes();
    let o = motbounds(
        dir.path(),
        &["bound", "--input", q.to_str().unwrap(), "--payoff", "straddle", "--marginals", "3,1"],
    );
    assert_eq!(code(&o), 2);
}

#[test]
fn point_mass_marginals_give_zero() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("m.json");
    let m = r#"{"atoms":[100.0],"weights":[1.0]}"#;
    std::fs::write(&path, format!("[{m},{m},{m}]")).unwrap();
    let o = motbounds(dir.path(), &["bound", "--input", path.to_str().unwrap(), "--payoff", "straddle"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = read_json(dir.path().join("bound.json"))["objective"].as_f64().unwrap();
    assert!(v.abs() < 1e-12);
}

#[test]
fn improve_writes_a_table() {
    let dir = TempDir::new().unwrap();
    let q = quotes();
    let o = motbounds(
        dir.path(),
        &["improve", "--input", q.to_str().unwrap(), "--payoff", "straddle", "--payoff", "asian:strike=100"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("improvement.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn examples_pass_their_checks() {
    for name in ["table2", "mixture", "convexinterp"] {
        let dir = TempDir::new().unwrap();
        let o = motbounds(dir.path(), &["example", name]);
        assert_eq!(code(&o), 0, "{name}: {}", String::from_utf8_lossy(&o.stdout));
        assert_eq!(read_json(dir.path().join(format!("{name}.json")))["passed"], true);
    }
    let dir = TempDir::new().unwrap();
    let o = motbounds(dir.path(), &["example", "straddle", "--atoms", "40"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn missed_targets_exit_with_the_acceptance_code() {
    let dir = TempDir::new().unwrap();
    let o = motbounds(dir.path(), &["example", "leftcurtain", "--atoms", "30"]);
    assert_eq!(code(&o), 5);
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
}

#[test]
fn outputs_are_reproducible() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let q = quotes();
    let args = ["bound", "--input", q.to_str().unwrap(), "--payoff", "asian:strike=100", "--sense", "max"];
    assert_eq!(code(&motbounds(a.path(), &args)), 0);
    assert_eq!(code(&motbounds(b.path(), &args)), 0);
    for f in ["bound.json", "gap.csv"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}
