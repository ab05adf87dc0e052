use std::process::{Command, Output};

use dopt::json::{BoundJson, DesignJson, LocalSearchReport, SolveJson, VerifyJson};

fn dopt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dopt"))
        .args(args)
        .env_remove("DOPT_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> &str {
    std::str::from_utf8(&o.stdout).unwrap()
}

#[test]
fn local_search_echoes_the_instance_shape() {
    let o = dopt(&["local-search", "--model", "quadratic", "--factors", "3", "--levels", "3", "--budget", "10"]);
    assert_eq!(o.status.code(), Some(0));
    let r: LocalSearchReport = serde_json::from_str(stdout(&o)).unwrap();
    assert_eq!(r.design.model.m, Some(10));
    assert_eq!(r.design.model.n, Some(27));
    assert_eq!(r.design.budget, 10);
    let (spec, design) = r.design.to_design().unwrap();
    assert!((design.info(&spec).unwrap().ldet() - r.design.ldet).abs() < 1e-12);
}

#[test]
fn budget_below_row_dimension_is_infeasible() {
    let o = dopt(&["local-search", "--budget", "1", "--model", "linear", "--factors", "3"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("infeasible"));
}

#[test]
fn bad_input_exits_two() {
    assert_eq!(dopt(&["local-search", "--model", "cubic", "--factors", "3", "--budget", "9"]).status.code(), Some(2));
    assert_eq!(dopt(&["local-search", "--model", "quadratic", "--factors", "3", "--levels", "2", "--budget", "12"]).status.code(), Some(2));
    assert_eq!(dopt(&["bound", "--budget", "9"]).status.code(), Some(2));
    assert_eq!(dopt(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(dopt(&["--help"]).status.code(), Some(0));
}

#[test]
fn seeded_runs_are_byte_identical() {
    let args = ["local-search", "--model", "quadratic", "--factors", "3", "--budget", "15", "--seed", "7", "--restarts", "2"];
    let a = dopt(&args);
    let b = dopt(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn bound_certificate_round_trips_through_verify() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bound.json");
    let p = path.to_str().unwrap();
    let o = dopt(&["bound", "--model", "quadratic", "--factors", "3", "--budget", "13", "--out", p]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    let r: BoundJson = serde_json::from_str(&text).unwrap();
    assert_eq!(r.certificate.scope, "full");
    assert_eq!(r.certificate.theta.len(), 100);

    let ls = dopt(&["local-search", "--model", "quadratic", "--factors", "3", "--budget", "13"]);
    let ls: LocalSearchReport = serde_json::from_str(stdout(&ls)).unwrap();
    assert!(r.bound >= ls.design.ldet);

    let v = dopt(&["verify", "--certificate", p]);
    assert_eq!(v.status.code(), Some(0), "{}", String::from_utf8_lossy(&v.stderr));

    // the certificate alone verifies as well
    let cert_path = dir.path().join("cert.json");
    std::fs::write(&cert_path, dopt::json::to_string(&r.certificate).unwrap()).unwrap();
    assert_eq!(dopt(&["verify", "--certificate", cert_path.to_str().unwrap()]).status.code(), Some(0));
}

#[test]
fn corrupted_certificate_names_the_violated_row() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bound.json");
    let p = path.to_str().unwrap();
    assert_eq!(dopt(&["bound", "--model", "linear", "--factors", "4", "--budget", "7", "--out", p]).status.code(), Some(0));
    let mut r: BoundJson = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    r.certificate.tau *= 0.9;
    std::fs::write(&path, dopt::json::to_string(&r).unwrap()).unwrap();
    let v = dopt(&["verify", "--certificate", p]);
    assert_eq!(v.status.code(), Some(1));
    let report: VerifyJson = serde_json::from_str(stdout(&v)).unwrap();
    assert!(!report.passed);
    assert!(report.checks[0].detail.contains("violates the dual constraint"));
    assert!(report.checks[0].detail.contains("row ("));
}

#[test]
fn zero_rounds_bound_is_flagged_and_still_valid() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("b.json");
    let p = path.to_str().unwrap();
    let o = dopt(&["bound", "--model", "quadratic", "--factors", "3", "--budget", "15", "--rounds", "0", "--out", p]);
    assert_eq!(o.status.code(), Some(0));
    let r: BoundJson = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(r.rounds, 1);
    assert!(r.round_cap_hit);
    assert_eq!(dopt(&["verify", "--certificate", p]).status.code(), Some(0));
}

#[test]
fn solve_proves_small_instances() {
    let o = dopt(&["solve", "--model", "linear", "--factors", "2", "--budget", "4"]);
    assert_eq!(o.status.code(), Some(0));
    let r: SolveJson = serde_json::from_str(stdout(&o)).unwrap();
    assert_eq!(r.proof.status, "optimal");
    assert!(r.proof.final_gap <= 1e-6);
    assert!((r.design.ldet - 16f64.ln() / 2.0).abs() < 1e-9);

    let o = dopt(&["solve", "--model", "quadratic", "--factors", "2", "--budget", "6"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn node_cap_without_proof_exits_four() {
    let o = dopt(&["solve", "--model", "quadratic", "--factors", "3", "--budget", "16", "--node-cap", "1"]);
    assert_eq!(o.status.code(), Some(4));
    let r: SolveJson = serde_json::from_str(stdout(&o)).unwrap();
    assert_eq!(r.proof.status, "node-cap");
    assert!(r.proof.final_gap > 1e-6);
    let d: &DesignJson = &r.design;
    assert_eq!(d.budget, 16);
}

#[test]
fn verify_default_suite_passes() {
    let o = dopt(&["verify"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r: VerifyJson = serde_json::from_str(stdout(&o)).unwrap();
    assert!(r.passed && r.checks.len() >= 20);
}

#[test]
fn verify_reports_capacity_for_large_instances() {
    let o = dopt(&["verify", "--instance", "kind=linear factors=20 levels=2"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("capacity"));
    let o = dopt(&["verify", "--instance", "kind=quadratic factors=3 levels=3", "--budget", "12"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn thread_count_comes_from_the_environment() {
    let args = ["bound", "--model", "linear", "--factors", "12", "--budget", "20"];
    let env = Command::new(env!("CARGO_BIN_EXE_dopt"))
        .args(args)
        .env("DOPT_THREADS", "3")
        .output()
        .unwrap();
    let flag = dopt(&["--threads", "1", "bound", "--model", "linear", "--factors", "12", "--budget", "20"]);
    assert_eq!(env.status.code(), Some(0));
    assert_eq!(env.stdout, flag.stdout);
    let bad = Command::new(env!("CARGO_BIN_EXE_dopt"))
        .args(args)
        .env("DOPT_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn run_writes_to_the_given_streams() {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = dopt::cli::run(
        ["dopt", "--threads", "1", "local-search", "--model", "linear", "--factors", "2", "--budget", "3"],
        &mut out,
        &mut err,
    );
    assert_eq!(code, 0);
    let r: LocalSearchReport = serde_json::from_slice(&out).unwrap();
    assert_eq!(r.design.budget, 3);
    assert!(err.is_empty());
}
