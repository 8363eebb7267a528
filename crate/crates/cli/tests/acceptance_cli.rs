//! Acceptance criteria 10 and 11: the benchmark cost ordering and the
//! three-phase response curve, both driven through the real binary.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use maturix::fit::{generate_synthetic, reference_scenario, Cutoff};
use maturix::sim::RngStream;

fn binary() -> &'static str {
    env!("CARGO_BIN_EXE_maturix")
}

fn workdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("maturix-acceptance-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> std::process::Output {
    Command::new(binary()).args(args).output().expect("binary runs")
}

fn read_curve(path: &Path) -> Vec<(f64, f64)> {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with('t'))
        .map(|l| {
            let mut parts = l.split(',');
            let t: f64 = parts.next().unwrap().parse().unwrap();
            let v: f64 = parts.next().unwrap().parse().unwrap();
            (t, v)
        })
        .collect()
}

const REFERENCE_SPEC: &str = r#"
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

[fit]
starts = 4
max_iters = 600
polish_restarts = 2
"#;

/// Criterion 10: on the reference scenario the continuous model's total fit
/// time is strictly below the 100-compartment screened total, and every
/// model's RSS lands within one order of magnitude of the best.
#[test]
fn c10_benchmark_ordering() {
    let started = Instant::now();
    let dir = workdir("c10");
    let spec_path = dir.join("ref.toml");
    std::fs::write(&spec_path, REFERENCE_SPEC).unwrap();

    let (params, delta, kinetics, times) = reference_scenario();
    let noise_sd = 0.05 * params.lambda / params.mu;
    let data = generate_synthetic(
        &params,
        Cutoff::Continuous(delta),
        &kinetics,
        &times,
        noise_sd,
        &RngStream::new(110, 0),
    )
    .unwrap();
    let data_path = dir.join("obs.csv");
    let mut csv = String::from("t,y\n");
    for (t, y) in &data {
        csv.push_str(&format!("{t},{y}\n"));
    }
    std::fs::write(&data_path, csv).unwrap();

    let out_path = dir.join("bench.csv");
    let output = run(&[
        "compare",
        "--model",
        spec_path.to_str().unwrap(),
        "--data",
        data_path.to_str().unwrap(),
        "--chains",
        "5,10,30,100",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "compare failed: {}", String::from_utf8_lossy(&output.stderr));

    let table = std::fs::read_to_string(&out_path).unwrap();
    let mut rows = Vec::new();
    for line in table.lines().skip(2) {
        let fields: Vec<&str> = line.split(',').collect();
        let model = fields[0].to_string();
        let rss: f64 = fields[7].parse().unwrap();
        let runtime: f64 = fields[8].parse().unwrap();
        rows.push((model, rss, runtime));
    }
    assert_eq!(rows.len(), 5, "one row per model: {table}");

    let continuous = rows.iter().find(|r| r.0 == "continuous").unwrap();
    let chain100 = rows.iter().find(|r| r.0 == "catenary-100").unwrap();
    assert!(
        continuous.2 < chain100.2,
        "continuous fit time {} must beat the screened chain-100 total {}",
        continuous.2,
        chain100.2
    );

    let rss_min = rows.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    let rss_max = rows.iter().map(|r| r.1).fold(0.0f64, f64::max);
    assert!(rss_min > 0.0);
    assert!(
        rss_max / rss_min < 10.0,
        "RSS spread {rss_max:.1}/{rss_min:.1} exceeds one order of magnitude"
    );
    // the 10-compartment chain already fits within a factor two of the
    // continuous model on this data
    let chain10 = rows.iter().find(|r| r.0 == "catenary-10").unwrap();
    assert!(
        chain10.1 <= 2.0 * continuous.1,
        "chain-10 RSS {} exceeds twice the continuous RSS {}",
        chain10.1,
        continuous.1
    );

    let elapsed = started.elapsed().as_secs_f64();
    println!(
        "acceptance 10: PASS — continuous {:.2}s < chain-100 screened {:.2}s; RSS ratio {:.2} ({elapsed:.0}s)",
        continuous.2,
        chain100.2,
        rss_max / rss_min
    );
    assert!(elapsed < 900.0, "criterion 10 exceeded its 15-minute budget");
    std::fs::remove_dir_all(&dir).ok();
}

const FIG7_SPEC: &str = r#"
kind = "continuous"
predictor = "transient"

[rates]
lambda = 1.0
rho = 1.0
mu = 1.0
lambda_support_start = 0.0

[killing]
gamma = 1.0
delta = 0.5
source = "pulse"

[killing.pulse]
onset = 10.0
slow_rate = 0.1
fast_rate = 0.5

[simulation]
seed = 7
initial_count = 0
"#;

/// Criterion 11: the pulse-killing curve rises to within 2% of the stationary
/// level, dips strictly below 95% of it after the pulse plus lag, and
/// recovers to within 2% by the horizon.
#[test]
fn c11_three_phase_curve() {
    let started = Instant::now();
    let dir = workdir("c11");
    let spec_path = dir.join("fig7.toml");
    std::fs::write(&spec_path, FIG7_SPEC).unwrap();
    let out_path = dir.join("curve.csv");

    let output = run(&[
        "evaluate",
        "--model",
        spec_path.to_str().unwrap(),
        "--from",
        "0",
        "--to",
        "60",
        "--step",
        "0.05",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "evaluate failed: {}", String::from_utf8_lossy(&output.stderr));

    let curve = read_curve(&out_path);
    assert_eq!(curve.len(), 1201);
    let stationary = 1.0;
    let peak_before_dip = curve
        .iter()
        .filter(|(t, _)| *t <= 11.0)
        .map(|&(_, v)| v)
        .fold(0.0f64, f64::max);
    assert!(
        peak_before_dip >= 0.98 * stationary,
        "curve never rose near the stationary level: {peak_before_dip}"
    );
    let dip = curve
        .iter()
        .filter(|(t, _)| *t > 11.0)
        .map(|&(_, v)| v)
        .fold(f64::INFINITY, f64::min);
    assert!(dip < 0.95 * stationary, "no visible dip: minimum after t=11 is {dip}");
    let final_value = curve.last().unwrap().1;
    assert!(
        (final_value - stationary).abs() <= 0.02 * stationary,
        "no recovery by the horizon: {final_value}"
    );

    let elapsed = started.elapsed().as_secs_f64();
    println!(
        "acceptance 11: PASS — rise {peak_before_dip:.4}, dip {dip:.4} < 0.95, recovery {final_value:.4} ({elapsed:.1}s)"
    );
    assert!(elapsed < 5.0, "criterion 11 exceeded its 5s budget");
    std::fs::remove_dir_all(&dir).ok();
}
