use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ellsmooth")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn solve_log_barrier_summary_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("trace.csv");
    let o = run(&["solve", "--problem", "log_barrier", "--x0", "1e-7", "--gap-tol", "1e-5", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{o:?}");
    let fields: Vec<String> = stdout(&o).split_whitespace().map(String::from).collect();
    assert_eq!(fields[0], "ConvergedGap");
    let iters: usize = fields[1].parse().unwrap();
    assert!((50..=100).contains(&iters));
    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("k,x0,f,grad_norm,step,safeguard\n"));
    assert_eq!(csv.lines().count(), iters + 2);

    // The written trace passes the trajectory checks.
    let v = run(&["verify", "--problem", "log_barrier", "--trace", out.to_str().unwrap()]);
    assert!(v.status.success(), "{}", stdout(&v));
}

#[test]
fn solve_quadratic_json_one_iteration() {
    let o = run(&["solve", "--problem", r#"{"name":"quadratic","L":4,"dim":2}"#, "--x0", "3,-2", "--grad-tol", "1e-20", "--json"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["status"], "ConvergedGrad");
    assert_eq!(v["iterations"], 1);
    assert_eq!(v["f_final"], 0.0);
    assert_eq!(v["grad_final"], 0.0);
}

#[test]
fn solve_spec_file_and_divergence_is_not_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(
        &spec,
        r#"{"problem":{"name":"log_barrier"},"ell":{"family":"affine","L0":800,"L1":2},"x0":[1e-7],"stopping":{"gap_tol":1e-5,"max_iters":10000}}"#,
    )
    .unwrap();
    let o = run(&["solve", "--spec", spec.to_str().unwrap(), "--json"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["status"], "Diverged");
}

#[test]
fn bad_input_exits_with_two() {
    for args in [
        vec!["solve", "--problem", "nope", "--x0", "1"],
        vec!["solve", "--problem", "log_barrier", "--x0", "0.5"],
        vec!["solve", "--problem", "log_barrier", "--x0", "0.01", "--rule", "bogus"],
        vec!["solve", "--problem", "{not json", "--x0", "1"],
        vec!["rates", "--setting", "nonconvex", "--ell", r#"{"family":"affine","L0":1,"L1":1}"#, "--epsilon", "0.1"],
    ] {
        assert_eq!(run(&args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn compare_preset_rows_in_input_order() {
    let o = run(&["compare", "--preset", "log_barrier"]);
    assert!(o.status.success());
    let json = stdout(&o).lines().last().unwrap().to_string();
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    let rows = v["rows"].as_array().unwrap();
    let status: Vec<&str> = rows.iter().map(|r| r["status"].as_str().unwrap()).collect();
    assert_eq!(status, ["ConvergedGap", "MaxIters", "Diverged"]);
    assert!(rows[1]["iterations"].as_u64().unwrap() >= 20_000);
    assert_eq!(stdout(&o), stdout(&run(&["compare", "--preset", "log_barrier"])));
}

#[test]
fn compare_rejects_mixed_problems() {
    let a = r#"{"problem":{"name":"exp_sum"},"x0":[0]}"#;
    let b = r#"{"problem":{"name":"quadratic"},"x0":[0]}"#;
    assert_eq!(run(&["compare", "--spec", a, "--spec", b]).status.code(), Some(2));
    assert_eq!(run(&["compare", "--spec", a]).status.code(), Some(2));
}

#[test]
fn rates_json_matches_constant_formula() {
    let o = run(&["rates", "--setting", "nonconvex", "--ell", r#"{"family":"constant","L":2}"#, "--epsilon", "0.1", "--gap", "3", "--json"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["formula_id"], "nonconvex_constant");
    assert!((v["iterations"].as_f64().unwrap() - 240.0).abs() < 1e-9);
}

#[test]
fn sgd_success_rate_and_infinite_ratio() {
    let o = run(&["sgd", "--problem", "quadratic", "--x0", "1", "--sigma", "1", "--epsilon", "0.1", "--delta", "0.2", "--seeds", "20"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v["success_rate"].as_f64().unwrap() >= 0.8);

    let bad = run(&["sgd", "--problem", "exp_sum", "--ell", r#"{"family":"exp_growth","L0":1,"L1":1}"#, "--x0", "0", "--sigma", "1", "--epsilon", "0.1", "--delta", "0.2"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn sgd_noiseless_matches_scaled_solve() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("sgd.csv");
    let b = dir.path().join("gd.csv");
    let o = run(&["sgd", "--problem", "quadratic", "--x0", "1", "--sigma", "0", "--epsilon", "0.1", "--delta", "0.2", "--big-t", "10", "--out", a.to_str().unwrap()]);
    assert!(o.status.success());
    // Constant models have doubling ratio 1, so the divisor is 5.
    let o = run(&["solve", "--problem", "quadratic", "--x0", "1", "--rule", "scaled:5", "--max-iters", "10", "--out", b.to_str().unwrap()]);
    assert!(o.status.success());
    let xs = |p: &std::path::Path| -> Vec<String> {
        std::fs::read_to_string(p).unwrap().lines().skip(1).map(|l| l.split(',').nth(1).unwrap().to_string()).collect()
    };
    assert_eq!(xs(&a), xs(&b));
}

#[test]
fn verify_exit_code_ignores_negative_control() {
    let o = run(&["verify", "--problem", "exp_sum", "--samples", "200", "--negative-control"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).contains("control caught"));
    let wrong = run(&["verify", "--problem", "log_barrier", "--ell", r#"{"family":"constant","L":800}"#, "--samples", "200"]);
    assert_eq!(wrong.status.code(), Some(1));
}
