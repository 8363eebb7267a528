//! Command-line front end. Exit codes: 0 success, 2 input validation,
//! 3 numeric failure, 4 optimizer non-convergence (result still written).

mod spec;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use maturix::dist::{chi_square_gof, total_variation};
use maturix::fit::{benchmark_compare, fit, FitProblem, ModelKind};
use maturix::sim::{empirical_pmf, simulate_counting_process, RngStream};

use spec::{Kind, ModelSpec, Predictor};

#[derive(Debug)]
pub struct CliError {
    message: String,
    exit: u8,
}

impl CliError {
    fn validation(message: String) -> Self {
        Self { message, exit: 2 }
    }

    fn numeric(message: String) -> Self {
        Self { message, exit: 3 }
    }

    fn from_validation(e: maturix::Error) -> Self {
        Self::validation(e.to_string())
    }

    fn from_numeric(e: maturix::Error) -> Self {
        Self::numeric(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "maturix", about = "Maturation/compartment modelling toolkit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Model specification file (TOML)
    #[arg(long)]
    model: PathBuf,
    /// Output file (defaults to the spec's output path, else stdout)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed override
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the model's mean curve as CSV rows `t,value[,drug]`
    Evaluate {
        #[command(flatten)]
        common: CommonArgs,
        /// Curve start time
        #[arg(long, default_value_t = 0.0)]
        from: f64,
        /// Curve end time
        #[arg(long)]
        to: f64,
        /// Grid spacing
        #[arg(long)]
        step: f64,
        /// Append the killing-drive concentration as a third column
        #[arg(long)]
        drug_column: bool,
        /// Quadrature tolerance override
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Simulate the count law at one time and compare with the exact law
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        /// Time at which the law is recorded
        #[arg(long)]
        at: f64,
        /// Monte-Carlo replica count override
        #[arg(long)]
        replicas: Option<u64>,
    },
    /// Least-squares fit of observations `t,y`
    Fit {
        #[command(flatten)]
        common: CommonArgs,
        /// Observations CSV
        #[arg(long)]
        data: PathBuf,
        /// Model family override: "continuous" or "catenary"
        #[arg(long)]
        kind: Option<String>,
        /// Chain length (required for catenary fits without a [chain] table)
        #[arg(long)]
        n: Option<usize>,
        /// ODE tolerance override for chain predictions
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Fit every chain size plus the continuous model and tabulate cost
    Compare {
        #[command(flatten)]
        common: CommonArgs,
        /// Observations CSV
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated chain sizes (empty = continuous only)
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        chains: Vec<usize>,
    },
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("MATURIX_THREADS") {
        match threads.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: MATURIX_THREADS must be a positive integer");
                return ExitCode::from(2);
            }
        }
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.exit)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Evaluate { common, from, to, step, drug_column, tol } => {
            cmd_evaluate(&common, from, to, step, drug_column, tol)
        }
        Command::Simulate { common, at, replicas } => cmd_simulate(&common, at, replicas),
        Command::Fit { common, data, kind, n, tol } => cmd_fit(&common, &data, kind, n, tol),
        Command::Compare { common, data, chains } => cmd_compare(&common, &data, &chains),
    }
}

/// Format a float with 17 significant digits (reproducible round trip).
fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_output(common: &CommonArgs, spec: &ModelSpec, content: &str) -> Result<(), CliError> {
    let target: Option<PathBuf> = common
        .out
        .clone()
        .or_else(|| spec.output.path.as_ref().map(PathBuf::from));
    match target {
        Some(path) => std::fs::write(&path, content).map_err(|e| {
            CliError::numeric(format!("cannot write {}: {e}", path.display()))
        }),
        None => {
            print!("{content}");
            std::io::stdout().flush().ok();
            Ok(())
        }
    }
}

fn cmd_evaluate(
    common: &CommonArgs,
    from: f64,
    to: f64,
    step: f64,
    drug_column: bool,
    tol: Option<f64>,
) -> Result<ExitCode, CliError> {
    let (spec, sha) = ModelSpec::load(&common.model)?;
    if !(step > 0.0) || to < from || from < 0.0 {
        return Err(CliError::validation(
            "evaluate needs 0 <= from <= to and step > 0".into(),
        ));
    }
    let mut grid = Vec::new();
    let mut k = 0u64;
    loop {
        let t = from + step * k as f64;
        if t > to + 1e-12 * to.abs().max(1.0) {
            break;
        }
        grid.push(t);
        k += 1;
    }

    // chain specs export the full per-compartment trajectory
    if spec.kind == Kind::Catenary {
        return evaluate_catenary(common, &spec, &sha, &grid, tol);
    }

    let mut model = spec.continuous_model()?;
    if let Some(t) = tol {
        if !(t > 0.0) {
            return Err(CliError::validation("tol must be positive".into()));
        }
        model = model.with_quad_tol(t);
    }

    let values: Vec<f64> = match spec.predictor {
        Predictor::Equilibrium => model
            .equilibrium_mean_batch(&grid.iter().copied().filter(|&t| t > 0.0).collect::<Vec<_>>())
            .map_err(CliError::from_numeric)
            .map(|tail| {
                // t = 0 evaluates to the equilibrium level itself
                let mut out = Vec::with_capacity(grid.len());
                let mut it = tail.into_iter();
                for &t in &grid {
                    if t > 0.0 {
                        out.push(it.next().expect("one value per positive grid point"));
                    } else {
                        out.push(spec.rates.lambda / spec.rates.mu);
                    }
                }
                out
            })?,
        Predictor::Transient => {
            let m0 = spec.simulation.initial_count;
            grid.par_iter()
                .map(|&t| model.mean_count(0.0, t, m0))
                .collect::<maturix::Result<Vec<f64>>>()
                .map_err(CliError::from_numeric)?
        }
    };

    let drive = spec.killing_drive()?;
    let seed = common.seed.unwrap_or(spec.simulation.seed);
    let mut out = String::new();
    out.push_str(&format!("# maturix evaluate spec-sha256={sha} seed={seed}\n"));
    out.push_str(if drug_column { "t,value,drug\n" } else { "t,value\n" });
    for (&t, &v) in grid.iter().zip(values.iter()) {
        if drug_column {
            out.push_str(&format!("{},{},{}\n", fmt(t), fmt(v), fmt(drive.value(t))));
        } else {
            out.push_str(&format!("{},{}\n", fmt(t), fmt(v)));
        }
    }
    write_output(common, &spec, &out)?;
    Ok(ExitCode::SUCCESS)
}

/// Integrate the chain spec from its drug-free equilibrium and export the
/// trajectory as `t,q1,...,qn` rows.
fn evaluate_catenary(
    common: &CommonArgs,
    spec: &ModelSpec,
    sha: &str,
    grid: &[f64],
    tol: Option<f64>,
) -> Result<ExitCode, CliError> {
    let chain = spec.chain.expect("validated for catenary kind");
    let n0 = chain.n0.ok_or_else(|| {
        CliError::validation("catenary evaluation needs chain.n0 in the spec".into())
    })?;
    let r = &spec.rates;
    let system = maturix::catenary_system(
        chain.n,
        r.lambda,
        r.rho,
        r.mu,
        spec.killing.gamma,
        n0,
        &spec.killing_drive()?,
    )
    .map_err(CliError::from_validation)?;
    let q0 = maturix::equilibrium_init(r.lambda, r.rho, r.mu, chain.n)
        .map_err(CliError::from_validation)?;
    let ode_tol = match tol {
        Some(t) if t > 0.0 => t,
        Some(_) => return Err(CliError::validation("tol must be positive".into())),
        None => 1e-8,
    };
    let positive: Vec<f64> = grid.iter().copied().filter(|&t| t > 0.0).collect();
    let traj = maturix::integrate_on_grid(&system, &q0, 0.0, &positive, ode_tol)
        .map_err(CliError::from_numeric)?;

    let seed = common.seed.unwrap_or(spec.simulation.seed);
    let mut out = String::new();
    out.push_str(&format!("# maturix evaluate spec-sha256={sha} seed={seed}\n"));
    out.push_str("t");
    for i in 1..=chain.n {
        out.push_str(&format!(",q{i}"));
    }
    out.push('\n');
    let mut rows = traj.values.iter();
    for &t in grid {
        let values: &[f64] = if t > 0.0 { rows.next().expect("one row per point") } else { &q0 };
        out.push_str(&fmt(t));
        for v in values {
            out.push_str(&format!(",{}", fmt(*v)));
        }
        out.push('\n');
    }
    write_output(common, spec, &out)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_simulate(
    common: &CommonArgs,
    at: f64,
    replicas: Option<u64>,
) -> Result<ExitCode, CliError> {
    let (spec, sha) = ModelSpec::load(&common.model)?;
    let replicas = replicas.unwrap_or(spec.simulation.replicas);
    if replicas < 1 {
        return Err(CliError::validation("replicas must be at least 1".into()));
    }
    if at <= 0.0 {
        return Err(CliError::validation("--at must be positive".into()));
    }
    let model = spec.continuous_model()?;
    let seed = common.seed.unwrap_or(spec.simulation.seed);
    let n0 = spec.simulation.initial_count;

    let samples: Vec<u64> = (0..replicas)
        .into_par_iter()
        .map(|replica| {
            let mut rng = RngStream::new(seed, replica).rng();
            simulate_counting_process(&model, n0, 0.0, at, &[at], &mut rng).map(|v| v[0])
        })
        .collect::<maturix::Result<Vec<u64>>>()
        .map_err(CliError::from_numeric)?;

    let law = model.occupation_law(0.0, at, n0).map_err(CliError::from_numeric)?;
    let exact = law.pmf_vector();
    let pmf = empirical_pmf(&samples).map_err(CliError::from_numeric)?;
    let tv = total_variation(&pmf, &exact);
    // too few replicas leave no usable bins; report null instead of failing
    let chi = chi_square_gof(&samples, &law).ok();

    let mut histogram = vec![0u64; pmf.len()];
    for &s in &samples {
        histogram[s as usize] += 1;
    }

    let report = serde_json::json!({
        "spec_sha256": sha,
        "seed": seed,
        "replicas": replicas,
        "at": at,
        "initial_count": n0,
        "law": { "m": law.m, "p": law.p, "lambda": law.lambda },
        "counts": histogram,
        "pmf": pmf,
        "exact_pmf": exact,
        "tv": tv,
        "chi_square": {
            "statistic": chi.map(|c| c.0),
            "p_value": chi.map(|c| c.1),
        },
    });
    let content = format!("{}\n", serde_json::to_string_pretty(&report).expect("serializable"));
    write_output(common, &spec, &content)?;
    eprintln!(
        "simulate: {replicas} replicas at t={at}: mean {:.4}, TV {tv:.4}, chi-square p {}",
        samples.iter().sum::<u64>() as f64 / replicas as f64,
        chi.map_or("n/a".into(), |c| format!("{:.4}", c.1))
    );
    Ok(ExitCode::SUCCESS)
}

/// Read observations `t,y`, tolerating a header row and `#` comments.
/// Reports the 1-based line number of the first malformed row.
fn read_observations(path: &Path) -> Result<Vec<(f64, f64)>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| CliError::validation(format!("cannot read {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record =
            record.map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 2 && record[0].eq_ignore_ascii_case("t") {
            continue; // header
        }
        if record.len() != 2 {
            return Err(CliError::validation(format!(
                "{} line {line}: expected 2 columns, found {}",
                path.display(),
                record.len()
            )));
        }
        let parse = |field: &str, name: &str| {
            field.parse::<f64>().map_err(|_| {
                CliError::validation(format!(
                    "{} line {line}: cannot parse {name} value {field:?}",
                    path.display()
                ))
            })
        };
        out.push((parse(&record[0], "time")?, parse(&record[1], "count")?));
    }
    if out.is_empty() {
        return Err(CliError::validation(format!("{}: no observations", path.display())));
    }
    Ok(out)
}

fn resolve_kind(
    spec: &ModelSpec,
    kind_flag: Option<&str>,
    n_flag: Option<usize>,
) -> Result<ModelKind, CliError> {
    let kind = match kind_flag {
        Some("continuous") => Kind::Continuous,
        Some("catenary") => Kind::Catenary,
        Some(other) => {
            return Err(CliError::validation(format!(
                "unknown model kind {other:?}; use \"continuous\" or \"catenary\""
            )));
        }
        None => spec.kind,
    };
    match kind {
        Kind::Continuous => Ok(ModelKind::Continuous),
        Kind::Catenary => {
            let n = n_flag.or(spec.chain.map(|c| c.n)).ok_or_else(|| {
                CliError::validation(
                    "catenary fit needs a chain length: pass --n or add a [chain] table".into(),
                )
            })?;
            Ok(ModelKind::Catenary { n })
        }
    }
}

fn cmd_fit(
    common: &CommonArgs,
    data: &Path,
    kind_flag: Option<String>,
    n_flag: Option<usize>,
    tol: Option<f64>,
) -> Result<ExitCode, CliError> {
    let (spec, sha) = ModelSpec::load(&common.model)?;
    let observations = read_observations(data)?;
    let kind = resolve_kind(&spec, kind_flag.as_deref(), n_flag)?;
    let mut bounds = spec.bounds();
    if let ModelKind::Catenary { n } = kind {
        // chain transfer rates live on the (n-1)-scaled axis
        bounds.rho = (bounds.rho.0 * (n - 1) as f64, bounds.rho.1 * (n - 1) as f64);
    }
    let mut options = spec.fit_options();
    if let Some(t) = tol {
        if !(t > 0.0) {
            return Err(CliError::validation("tol must be positive".into()));
        }
        options.ode_tol = t;
    }
    let problem =
        FitProblem::new(observations, kind, spec.drug_kinetics()?, bounds, options)
            .map_err(CliError::from_validation)?;
    let seed = common.seed.unwrap_or(spec.simulation.seed);
    let result = fit(&problem, &RngStream::new(seed, 0)).map_err(CliError::from_numeric)?;

    let report = serde_json::json!({
        "spec_sha256": sha,
        "seed": seed,
        "parameters": {
            "lambda": result.params.lambda,
            "rho": result.params.rho,
            "mu": result.params.mu,
            "gamma": result.params.gamma,
            "delta": result.delta,
            "n0": result.n0,
        },
        "rss": result.rss,
        "evaluations": result.evaluations,
        "runtime_s": result.runtime_s,
        "converged": result.converged,
    });
    let content = format!("{}\n", serde_json::to_string_pretty(&report).expect("serializable"));
    write_output(common, &spec, &content)?;
    eprintln!(
        "fit: rss {:.6e}, {} evaluations, {:.2}s, converged: {}",
        result.rss, result.evaluations, result.runtime_s, result.converged
    );
    Ok(if result.converged { ExitCode::SUCCESS } else { ExitCode::from(4) })
}

fn cmd_compare(
    common: &CommonArgs,
    data: &Path,
    chains: &[usize],
) -> Result<ExitCode, CliError> {
    let (spec, sha) = ModelSpec::load(&common.model)?;
    let observations = read_observations(data)?;
    let seed = common.seed.unwrap_or(spec.simulation.seed);
    let rows = benchmark_compare(
        &observations,
        chains,
        &spec.drug_kinetics()?,
        spec.bounds(),
        spec.killing.delta,
        spec.fit_options(),
        &RngStream::new(seed, 0),
    )
    .map_err(CliError::from_numeric)?;

    let mut out = String::new();
    out.push_str(&format!("# maturix compare spec-sha256={sha} seed={seed}\n"));
    out.push_str("model,lambda,rho,mu,gamma,delta_or_n0,evaluations,rss,runtime_s\n");
    for row in &rows {
        let cutoff = match (row.delta, row.n0) {
            (Some(d), _) => fmt(d),
            (None, Some(n0)) => n0.to_string(),
            (None, None) => String::new(),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            row.model,
            fmt(row.params.lambda),
            fmt(row.params.rho),
            fmt(row.params.mu),
            fmt(row.params.gamma),
            cutoff,
            row.evaluations,
            fmt(row.rss),
            fmt(row.runtime_s),
        ));
    }
    write_output(common, &spec, &out)?;

    let by_rss = rows.iter().min_by(|a, b| a.rss.total_cmp(&b.rss)).expect("nonempty");
    let by_time =
        rows.iter().min_by(|a, b| a.runtime_s.total_cmp(&b.runtime_s)).expect("nonempty");
    eprintln!("compare: best RSS {} ({:.6e}); fastest {} ({:.2}s)",
        by_rss.model, by_rss.rss, by_time.model, by_time.runtime_s);
    Ok(ExitCode::SUCCESS)
}
