#![allow(dead_code)]

use std::path::PathBuf;
use std::process::Command;

pub struct Run {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn data(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join("data")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

pub fn lasalle(args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_lasalle"))
        .args(args)
        .output()
        .expect("binary runs");
    Run {
        code: out.status.code().expect("exited normally"),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

/// The quadratic benchmark invocations whose outputs are checked in under
/// `tests/golden/`, as (golden file name, arguments, expected exit code).
/// `{quadratic}` is replaced by the system file path and `{out}` by the output
/// path.
pub const GOLDEN_RUNS: &[(&str, &[&str], i32)] = &[
    ("quadratic_simulate.csv", &["simulate", "{quadratic}", "--x0", "0.5", "--steps", "10", "--out", "{out}"], 0),
    ("quadratic_fixed_points.json", &["fixed-points", "{quadratic}", "--out", "{out}"], 0),
    ("quadratic_limit_point.json", &["limit-set", "{quadratic}", "--x0", "0.9", "--out", "{out}"], 0),
    ("quadratic_limit_box.json", &["limit-set", "{quadratic}", "--lower", "0", "--upper", "1", "--grid", "32", "--out", "{out}"], 0),
    ("quadratic_invariant_part.json", &["invariant-part", "{quadratic}", "--grid", "32", "--out", "{out}"], 0),
    ("quadratic_invariant_part.csv", &["invariant-part", "{quadratic}", "--grid", "32", "--plot", "{out}", "--out", "{out}.json"], 0),
    (
        "quadratic_lasalle.json",
        &["lasalle", "{quadratic}", "--x0", "0.2", "--x0", "0.5", "--x0", "0.9", "--x0", "1.0", "--out", "{out}"],
        0,
    ),
    ("fibonacci_lift.json", &["lift", "{fib}", "--out", "{out}"], 0),
];

pub fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("golden")
}

/// Runs one golden invocation writing to `out` and returns the exit code.
pub fn run_golden(args: &[&str], out: &str) -> Run {
    let quadratic = data("quadratic.json");
    let fib = data("fibonacci.json");
    let args: Vec<String> = args
        .iter()
        .map(|a| a.replace("{quadratic}", &quadratic).replace("{fib}", &fib).replace("{out}", out))
        .collect();
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    lasalle(&refs)
}
