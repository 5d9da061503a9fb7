use std::fs;
use std::process::{Command, Output};

use approx::assert_abs_diff_eq;
use chargelot_cli::figure::CSV_HEADER;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chargelot")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// Value of `field` in the single CSV record printed to stdout.
fn field(o: &Output, name: &str) -> f64 {
    let text = stdout(o);
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let i = header.iter().position(|h| *h == name).unwrap_or_else(|| panic!("no column {name}"));
    row[i].parse().unwrap()
}

#[test]
fn exact_single_space() {
    let o = run(&["exact", "--lambda", "1", "--mu", "1", "--nu", "1", "-K", "1", "-M", "1"]);
    assert!(o.status.success());
    assert_abs_diff_eq!(field(&o, "success"), 0.5, epsilon = 1e-12);
}

#[test]
fn bounds_single_space() {
    let o = run(&["bounds", "--lambda", "1", "-K", "1", "-M", "1"]);
    assert!(o.status.success());
    assert_abs_diff_eq!(field(&o, "lower"), 0.4180, epsilon = 5e-5);
    assert_abs_diff_eq!(field(&o, "upper"), 0.5, epsilon = 1e-12);
}

#[test]
fn fluid_overloaded_example() {
    let o = run(&["fluid", "--lambda", "10", "--mu", "1", "--nu", "1", "-K", "2", "-M", "0.5"]);
    assert!(o.status.success());
    assert_abs_diff_eq!(field(&o, "u_star"), 1.3033, epsilon = 5e-5);
    assert_abs_diff_eq!(field(&o, "p_s"), 0.2773, epsilon = 5e-5);
}

#[test]
fn json_lines_output() {
    let o = run(&["exact", "--lambda", "1", "-K", "1", "-M", "1", "--format", "json-lines"]);
    let v: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_abs_diff_eq!(v["success"].as_f64().unwrap(), 0.5, epsilon = 1e-12);
    assert_eq!(v["K"], 1);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&["exact", "--lambda", "1", "-K", "2", "-M", "3"]).status.code(), Some(1));
    assert_eq!(run(&["exact", "--lambda", "1", "-K", "2"]).status.code(), Some(1));
    assert_eq!(run(&["exact", "--bogus"]).status.code(), Some(1));
    assert_eq!(
        run(&["simulate", "--lambda", "1", "-K", "2", "-M", "1", "--parking", "gamma:2"]).status.code(),
        Some(1)
    );
    assert_eq!(run(&["figure", "-K", "5", "--load", "1", "--grid", "0.5,1.5"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn numerical_failure_exits_two() {
    // Above the default state limit of the exact solver.
    let o = run(&["exact", "--lambda", "1000", "-K", "2000", "-M", "10"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("numerical failure"));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# single space\nlambda = 1\nK = 1\nM = 1\nnu = 3\n").unwrap();
    let from_file = run(&["exact", "--config", cfg.to_str().unwrap()]);
    assert!(from_file.status.success());
    assert_abs_diff_eq!(field(&from_file, "nu"), 3.0);
    let overridden = run(&["exact", "--config", cfg.to_str().unwrap(), "--nu", "1"]);
    assert_abs_diff_eq!(field(&overridden, "success"), 0.5, epsilon = 1e-12);
}

#[test]
fn out_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let o = run(&["bounds", "--lambda", "4", "-K", "5", "-M", "2", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stdout(&o).is_empty());
    assert!(fs::read_to_string(out).unwrap().starts_with("lambda,mu,nu,K,M,lower,upper"));
}

#[test]
fn simulate_is_reproducible_per_seed() {
    let args = ["simulate", "--lambda", "4", "-K", "5", "-M", "2", "--horizon", "200", "--replications", "4"];
    let a = run(&[&args[..], &["--seed", "9"]].concat());
    let b = run(&[&args[..], &["--seed", "9"]].concat());
    let c = run(&[&args[..], &["--seed", "10"]].concat());
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn simulate_general_engine_selected_by_laws() {
    let o = run(&[
        "simulate",
        "--lambda",
        "4",
        "-K",
        "5",
        "-M",
        "2",
        "--horizon",
        "200",
        "--replications",
        "4",
        "--parking",
        "det:1",
        "--format",
        "json-lines",
    ]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(v["engine"], "general");
}

#[test]
fn diffusion_reports_constants() {
    let o = run(&["diffusion", "--beta", "0", "--horizon", "50"]);
    assert!(o.status.success());
    let c2 = 2.0 / (1.0 + 1.0 / 2f64.sqrt());
    assert_abs_diff_eq!(field(&o, "c2"), c2, epsilon = 1e-12);
    assert_abs_diff_eq!(field(&o, "c1"), c2 / 2f64.sqrt(), epsilon = 1e-12);
}

#[test]
fn figure_all_writes_six_panels_with_scripts() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "figure",
        "--all",
        "--grid",
        "0.5,1.0",
        "--replications",
        "2",
        "--horizon",
        "100",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut names: Vec<String> =
        fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names.len(), 12);
    for name in names.iter().filter(|n| n.ends_with(".csv")) {
        let text = fs::read_to_string(dir.path().join(name)).unwrap();
        assert_eq!(text.lines().next(), Some(CSV_HEADER));
        assert_eq!(text.lines().count(), 3);
        let script = fs::read_to_string(dir.path().join(name.replace(".csv", ".py"))).unwrap();
        assert!(script.contains(name.as_str()));
    }
}

#[test]
fn figure_to_stdout_in_grid_order() {
    let o =
        run(&["figure", "-K", "5", "--load", "1", "--grid", "0.2,0.6,1.0", "--replications", "2", "--horizon", "100"]);
    let text = stdout(&o);
    let ratios: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(ratios, ["0.2", "0.6", "1"]);
}
