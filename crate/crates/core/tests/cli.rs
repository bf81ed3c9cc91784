//! End-to-end checks of the `nfbdd` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn nfbdd(args: &[&str]) -> Output {
    nfbdd_env(args, &[])
}

fn nfbdd_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_nfbdd"));
    cmd.args(args);
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let path = dir.path().join(name);
    fs::write(&path, text).unwrap();
    path.display().to_string()
}

/// A generated instance with 18 variables, above the enumeration limit.
fn generated(dir: &TempDir) -> String {
    let path = dir.path().join("g.nfbdd").display().to_string();
    let o = nfbdd(&["gen", "--vars", "18", "--edges", "24", "--seed", "5", "-o", &path]);
    assert!(o.status.success(), "{}", stderr(&o));
    path
}

const ITE_X1: &str = "p nfbdd 1 3\n1 F\n2 T\n3 d 1 2 1\ns 3\n";

#[test]
fn count_json_lists_every_parameter() {
    let dir = TempDir::new().unwrap();
    let input = generated(&dir);
    let o = nfbdd(&["count", &input, "--format", "json", "--exact-when-small", "false"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    for key in ["epsilon", "delta", "kappa", "n_s", "n_t", "theta", "m", "seed"] {
        assert!(v["params"].get(key).is_some(), "missing params.{key}");
    }
    assert_eq!(v["method"], "sampler");
    assert_eq!(v["runs"].as_array().unwrap().len() as u64, v["params"]["m"].as_u64().unwrap());
    assert!(v["estimate"].as_f64().unwrap() > 0.0);
}

#[test]
fn zero_epsilon_is_a_parameter_error() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "ite.nfbdd", ITE_X1);
    let o = nfbdd(&["count", &input, "--epsilon", "0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn parse_errors_name_the_line() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "bad.nfbdd", "p nfbdd 1 2\n1 T\n2 d 1 1 9\ns 2\n");
    let o = nfbdd(&["validate", &input]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn exact_beyond_the_cap_exits_with_three() {
    let dir = TempDir::new().unwrap();
    let input = generated(&dir);
    let o = nfbdd(&["exact", &input, "--cap", "10"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn exact_counts_a_single_literal() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "ite.nfbdd", ITE_X1);
    let o = nfbdd(&["exact", &input]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), "1\n");
}

#[test]
fn normalize_wraps_a_literal_in_four_nodes() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "ite.nfbdd", ITE_X1);
    let out = dir.path().join("norm.nfbdd");
    let o = nfbdd(&["normalize", &input, "-o", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("p nfbdd 1 4\n"), "{text}");
    let o = nfbdd(&["validate", out.to_str().unwrap()]);
    assert!(o.status.success());
}

#[test]
fn normalize_reports_unsatisfiable_input() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "f.nfbdd", "p nfbdd 2 3\n1 F\n2 d 1 1 1\n3 d 2 2 1\ns 3\n");
    let o = nfbdd(&["normalize", &input]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o), "CONSTANT_FALSE\n");
}

#[test]
fn gen_is_deterministic_per_seed() {
    let a = nfbdd(&["gen", "--vars", "8", "--edges", "20", "--seed", "11"]);
    let b = nfbdd(&["gen", "--vars", "8", "--edges", "20", "--seed", "11"]);
    let c = nfbdd(&["gen", "--vars", "8", "--edges", "20", "--seed", "12"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn count_output_is_identical_across_thread_counts() {
    let dir = TempDir::new().unwrap();
    let input = generated(&dir);
    let args = ["count", input.as_str(), "--format", "json", "--seed", "9", "--exact-when-small", "false"];
    let one = nfbdd_env(&args, &[("NFBDD_THREADS", "1")]);
    let again = nfbdd_env(&args, &[("NFBDD_THREADS", "1")]);
    let eight = nfbdd_env(&args, &[("NFBDD_THREADS", "8")]);
    assert!(one.status.success(), "{}", stderr(&one));
    assert_eq!(one.stdout, again.stdout);
    assert_eq!(one.stdout, eight.stdout);
}

#[test]
fn dnf_input_is_counted_exactly_when_small() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "f.cnf", "p dnf 3 2\n1 2 0\n-1 3 0\n");
    let o = nfbdd(&["count", &input, "--dnf", "--format", "json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["method"], "exact");
    assert_eq!(v["estimate"].as_f64(), Some(4.0));
}

#[test]
fn calibrate_without_theta_never_interrupts() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "ite.nfbdd", ITE_X1);
    let o = nfbdd(&["calibrate", &input, "--no-theta", "--trials", "20", "--format", "json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    for inst in v["instances"].as_array().unwrap() {
        assert_eq!(inst["interrupt_rate"].as_f64(), Some(0.0));
    }
    assert!(Path::new(&input).exists());
}
