//! Behavioral tests for the command-line surface: exit codes, validation
//! messages, determinism, and the fit round trip.

use std::path::PathBuf;
use std::process::Command;

use maturix::fit::{generate_synthetic, reference_scenario, Cutoff};
use maturix::sim::RngStream;

fn binary() -> &'static str {
    env!("CARGO_BIN_EXE_maturix")
}

fn workdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("maturix-cli-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> std::process::Output {
    Command::new(binary()).args(args).output().expect("binary runs")
}

fn run_with_env(args: &[&str], key: &str, value: &str) -> std::process::Output {
    Command::new(binary()).args(args).env(key, value).output().expect("binary runs")
}

const BASIC_SPEC: &str = r#"
kind = "continuous"

[rates]
lambda = 2.0
rho = 0.01
mu = 0.04

[killing]
gamma = 0.6
delta = 0.6

[simulation]
seed = 42
replicas = 500
"#;

#[test]
fn evaluate_is_byte_identical_across_reruns() {
    let dir = workdir("det");
    let spec = dir.join("m.toml");
    std::fs::write(&spec, BASIC_SPEC).unwrap();
    let (a, b) = (dir.join("a.csv"), dir.join("b.csv"));
    for out in [&a, &b] {
        let o = run(&[
            "evaluate",
            "--model",
            spec.to_str().unwrap(),
            "--to",
            "240",
            "--step",
            "12",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success());
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let text = std::fs::read_to_string(&a).unwrap();
    assert!(text.starts_with("# maturix evaluate spec-sha256="), "missing provenance header");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn evaluate_without_drug_is_flat_at_equilibrium() {
    let dir = workdir("flat");
    let spec = dir.join("m.toml");
    std::fs::write(
        &spec,
        BASIC_SPEC.replace("gamma = 0.6", "gamma = 0.0"),
    )
    .unwrap();
    let out = dir.join("c.csv");
    let o = run(&[
        "evaluate",
        "--model",
        spec.to_str().unwrap(),
        "--to",
        "120",
        "--step",
        "24",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    for line in std::fs::read_to_string(&out).unwrap().lines().skip(2) {
        let v: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!((v - 50.0).abs() < 1e-6, "expected flat 50, got {v}");
    }
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn unknown_spec_key_rejected_with_exit_2() {
    let dir = workdir("badkey");
    let spec = dir.join("m.toml");
    std::fs::write(&spec, format!("{BASIC_SPEC}\ntypo_key = 1\n")).unwrap();
    let o = run(&["evaluate", "--model", spec.to_str().unwrap(), "--to", "1", "--step", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("typo_key"));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn malformed_csv_row_reports_line_number() {
    let dir = workdir("badcsv");
    let spec = dir.join("m.toml");
    std::fs::write(&spec, BASIC_SPEC).unwrap();
    let data = dir.join("obs.csv");
    std::fs::write(&data, "t,y\n12,48.5\n24,not-a-number\n36,49.0\n").unwrap();
    let o = run(&[
        "fit",
        "--model",
        spec.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3"), "stderr should name line 3: {err}");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn catenary_fit_requires_chain_length() {
    let dir = workdir("non");
    let spec = dir.join("m.toml");
    std::fs::write(&spec, BASIC_SPEC).unwrap();
    let data = dir.join("obs.csv");
    std::fs::write(&data, "t,y\n12,48.0\n24,44.0\n36,40.0\n48,42.0\n60,46.0\n").unwrap();
    let o = run(&[
        "fit",
        "--model",
        spec.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--kind",
        "catenary",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--n"));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn simulate_single_replica_records_one_count() {
    let dir = workdir("one");
    let spec = dir.join("m.toml");
    std::fs::write(&spec, BASIC_SPEC).unwrap();
    let out = dir.join("law.json");
    let o = run(&[
        "simulate",
        "--model",
        spec.to_str().unwrap(),
        "--at",
        "24",
        "--replicas",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let counts: u64 = report["counts"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).sum();
    assert_eq!(counts, 1);
    assert!(report["chi_square"]["p_value"].is_null());
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn simulate_reproducible_across_worker_counts() {
    let dir = workdir("workers");
    let spec = dir.join("m.toml");
    std::fs::write(&spec, BASIC_SPEC).unwrap();
    let (a, b) = (dir.join("a.json"), dir.join("b.json"));
    let args_a = [
        "simulate",
        "--model",
        spec.to_str().unwrap(),
        "--at",
        "24",
        "--replicas",
        "400",
        "--out",
        a.to_str().unwrap(),
    ];
    let o = run_with_env(&args_a, "MATURIX_THREADS", "1");
    assert!(o.status.success());
    let args_b = [
        "simulate",
        "--model",
        spec.to_str().unwrap(),
        "--at",
        "24",
        "--replicas",
        "400",
        "--out",
        b.to_str().unwrap(),
    ];
    let o = run_with_env(&args_b, "MATURIX_THREADS", "2");
    assert!(o.status.success());
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn simulate_law_close_to_exact_at_modest_replicas() {
    let dir = workdir("law");
    let spec = dir.join("m.toml");
    // drug-free case: law is exactly Poisson(lambda/mu at equilibrium ramp)
    std::fs::write(
        &spec,
        r#"
kind = "continuous"

[rates]
lambda = 1.0
rho = 1.0
mu = 1.0

[killing]
gamma = 0.0
delta = 0.0

[simulation]
seed = 5
replicas = 20000
"#,
    )
    .unwrap();
    let out = dir.join("law.json");
    let o = run(&[
        "simulate",
        "--model",
        spec.to_str().unwrap(),
        "--at",
        "5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert!(report["tv"].as_f64().unwrap() < 0.02);
    assert!(report["chi_square"]["p_value"].as_f64().unwrap() > 0.001);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn fit_round_trip_recovers_parameters() {
    let dir = workdir("roundtrip");
    let spec = dir.join("m.toml");
    std::fs::write(
        &spec,
        format!("{BASIC_SPEC}\n[fit]\nstarts = 8\nmax_iters = 2000\npolish_restarts = 4\n"),
    )
    .unwrap();
    let (params, delta, kinetics, times) = reference_scenario();
    let data = generate_synthetic(
        &params,
        Cutoff::Continuous(delta),
        &kinetics,
        &times,
        0.0,
        &RngStream::new(1, 0),
    )
    .unwrap();
    let data_path = dir.join("obs.csv");
    let mut csv = String::from("t,y\n");
    for (t, y) in &data {
        csv.push_str(&format!("{t},{y}\n"));
    }
    std::fs::write(&data_path, csv).unwrap();
    let out = dir.join("fit.json");
    let o = run(&[
        "fit",
        "--model",
        spec.to_str().unwrap(),
        "--data",
        data_path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let p = &report["parameters"];
    for (name, want) in [
        ("lambda", params.lambda),
        ("rho", params.rho),
        ("mu", params.mu),
        ("gamma", params.gamma),
        ("delta", delta),
    ] {
        let got = p[name].as_f64().unwrap();
        assert!(
            (got - want).abs() / want < 0.05,
            "{name}: got {got}, want {want} within 5%"
        );
    }
    assert!(report["converged"].as_bool().unwrap());
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn exhausted_optimizer_returns_exit_4_with_result_written() {
    let dir = workdir("exit4");
    let spec = dir.join("m.toml");
    std::fs::write(
        &spec,
        format!("{BASIC_SPEC}\n[fit]\nstarts = 1\nmax_iters = 1\npolish_restarts = 0\n"),
    )
    .unwrap();
    let (params, delta, kinetics, times) = reference_scenario();
    let data = generate_synthetic(
        &params,
        Cutoff::Continuous(delta),
        &kinetics,
        &times,
        0.0,
        &RngStream::new(1, 0),
    )
    .unwrap();
    let data_path = dir.join("obs.csv");
    let mut csv = String::from("t,y\n");
    for (t, y) in &data {
        csv.push_str(&format!("{t},{y}\n"));
    }
    std::fs::write(&data_path, csv).unwrap();
    let out = dir.join("fit.json");
    let o = run(&[
        "fit",
        "--model",
        spec.to_str().unwrap(),
        "--data",
        data_path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(4));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert!(!report["converged"].as_bool().unwrap());
    assert!(report["rss"].as_f64().unwrap().is_finite());
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn evaluate_catenary_exports_full_trajectory() {
    let dir = workdir("chaintraj");
    let spec = dir.join("m.toml");
    std::fs::write(
        &spec,
        r#"
kind = "catenary"

[rates]
lambda = 2.0
rho = 0.09
mu = 0.04

[killing]
gamma = 0.6
delta = 0.6

[chain]
n = 10
n0 = 5
"#,
    )
    .unwrap();
    let out = dir.join("traj.csv");
    let o = run(&[
        "evaluate",
        "--model",
        spec.to_str().unwrap(),
        "--to",
        "240",
        "--step",
        "24",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# maturix evaluate"));
    assert_eq!(lines.next().unwrap(), "t,q1,q2,q3,q4,q5,q6,q7,q8,q9,q10");
    let first: Vec<f64> =
        lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(first.len(), 11);
    // row at t = 0 sits at the drug-free equilibrium
    assert_eq!(first[0], 0.0);
    assert!((first[1] - 2.0 / 0.09).abs() < 1e-9);
    assert!((first[10] - 50.0).abs() < 1e-9);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn numeric_failure_exits_3() {
    let dir = workdir("exit3");
    let spec = dir.join("m.toml");
    std::fs::write(&spec, BASIC_SPEC).unwrap();
    // horizon far beyond the cumulative-integral guard trips the numeric path
    let o = run(&[
        "evaluate",
        "--model",
        spec.to_str().unwrap(),
        "--to",
        "100000",
        "--step",
        "50000",
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn compare_with_empty_chain_list_reports_continuous_only() {
    let dir = workdir("nochains");
    let spec = dir.join("m.toml");
    std::fs::write(
        &spec,
        format!("{BASIC_SPEC}\n[fit]\nstarts = 2\nmax_iters = 200\npolish_restarts = 1\n"),
    )
    .unwrap();
    let (params, delta, kinetics, times) = reference_scenario();
    let data = generate_synthetic(
        &params,
        Cutoff::Continuous(delta),
        &kinetics,
        &times,
        2.5,
        &RngStream::new(2, 0),
    )
    .unwrap();
    let data_path = dir.join("obs.csv");
    let mut csv = String::from("t,y\n");
    for (t, y) in &data {
        csv.push_str(&format!("{t},{y}\n"));
    }
    std::fs::write(&data_path, csv).unwrap();
    let out = dir.join("bench.csv");
    let o = run(&[
        "compare",
        "--model",
        spec.to_str().unwrap(),
        "--data",
        data_path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = std::fs::read_to_string(&out).unwrap();
    let rows: Vec<&str> = table.lines().skip(2).collect();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].starts_with("continuous,"));
    std::fs::remove_dir_all(&dir).ok();
}
