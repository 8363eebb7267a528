//! Python bindings: the continuous maturation model, its exact occupation
//! law, the chain predictor, Monte-Carlo validation and least-squares
//! fitting.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use maturix::dist::{chi_square_gof, total_variation as tv};
use maturix::fit::{
    fit as fit_rs, generate_synthetic, predict_catenary as predict_catenary_rs,
    predict_continuous, Cutoff, FitOptions, FitProblem, ModelKind, ParamBounds, RateParams,
};
use maturix::ident::{effective_input_rate, normalize_unit_input, scale_input};
use maturix::sim::{empirical_pmf, simulate_counting_process, RngStream};
use maturix::{
    BinomialPoissonLaw as RsLaw, ContinuousModel as RsModel, DrugKinetics as RsKinetics,
    ExpSegment, ExpTerm, RateSchedule,
};

fn value_err(e: maturix::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Multi-dose infusion drug concentration profile.
#[pyclass(name = "DrugKinetics", from_py_object)]
#[derive(Clone)]
struct PyDrugKinetics {
    inner: RsKinetics,
}

#[pymethods]
impl PyDrugKinetics {
    #[new]
    #[pyo3(signature = (a_kin=1.86, b_kin=0.51, n_doses=5, dose_interval=24.0, infusion_duration=0.5))]
    fn new(
        a_kin: f64,
        b_kin: f64,
        n_doses: usize,
        dose_interval: f64,
        infusion_duration: f64,
    ) -> PyResult<Self> {
        RsKinetics::new(a_kin, b_kin, n_doses, dose_interval, infusion_duration)
            .map(|inner| Self { inner })
            .map_err(value_err)
    }

    /// Concentration at time `t` (zero before the first dose).
    fn concentration(&self, t: f64) -> f64 {
        self.inner.concentration(t)
    }

    /// Exact antiderivative of the concentration, anchored at zero.
    fn concentration_primitive(&self, t: f64) -> f64 {
        self.inner.concentration_primitive(t)
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.inner.breakpoints()
    }

    fn __repr__(&self) -> String {
        format!(
            "DrugKinetics(a_kin={}, b_kin={}, n_doses={}, dose_interval={}, infusion_duration={})",
            self.inner.a_kin,
            self.inner.b_kin,
            self.inner.n_doses,
            self.inner.dose_interval,
            self.inner.infusion_duration
        )
    }
}

/// Exact law of the mature count: Binomial(m, p) thinning of the survivors
/// plus an independent Poisson(lam) influx.
#[pyclass(name = "BinomialPoissonLaw", skip_from_py_object)]
#[derive(Clone)]
struct PyLaw {
    inner: RsLaw,
}

#[pymethods]
impl PyLaw {
    #[new]
    fn new(m: u64, p: f64, lam: f64) -> PyResult<Self> {
        RsLaw::new(m, p, lam).map(|inner| Self { inner }).map_err(value_err)
    }

    #[getter]
    fn m(&self) -> u64 {
        self.inner.m
    }

    #[getter]
    fn p(&self) -> f64 {
        self.inner.p
    }

    #[getter(lam)]
    fn lam(&self) -> f64 {
        self.inner.lambda
    }

    fn pmf(&self, k: u64) -> f64 {
        self.inner.pmf(k)
    }

    fn mean(&self) -> f64 {
        self.inner.mean()
    }

    fn variance(&self) -> f64 {
        self.inner.variance()
    }

    /// pmf on `0..=tail_bound` (covers all but < 1e-12 of the mass).
    fn pmf_vector(&self) -> Vec<f64> {
        self.inner.pmf_vector()
    }

    fn __repr__(&self) -> String {
        format!(
            "BinomialPoissonLaw(m={}, p={}, lam={})",
            self.inner.m, self.inner.p, self.inner.lambda
        )
    }
}

/// The continuous maturation model: drift speed `rho` through the maturation
/// interval, input intensity `lambda`, elimination `mu` after maturation and
/// killing `gamma * q(t)` on stages below `delta` on the way.
#[pyclass(name = "ContinuousModel", skip_from_py_object)]
#[derive(Clone)]
struct PyModel {
    inner: RsModel,
}

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (rho, lam, mu, gamma=0.0, delta=0.0, kinetics=None, lambda_support_start=None, quad_tol=1e-9))]
    fn new(
        rho: f64,
        lam: f64,
        mu: f64,
        gamma: f64,
        delta: f64,
        kinetics: Option<PyDrugKinetics>,
        lambda_support_start: Option<f64>,
        quad_tol: f64,
    ) -> PyResult<Self> {
        let input = match lambda_support_start {
            Some(start) => RateSchedule::step(start, lam),
            None => RateSchedule::constant(lam),
        };
        let drive = match kinetics {
            Some(k) => k.inner.schedule(),
            None => RateSchedule::zero(),
        };
        RsModel::with_profile(rho, input, RateSchedule::constant(mu), gamma, delta, drive)
            .map(|inner| Self { inner: inner.with_quad_tol(quad_tol) })
            .map_err(value_err)
    }

    /// Model whose killing drive is a difference-of-exponentials pulse
    /// starting at `onset` instead of drug kinetics.
    #[staticmethod]
    #[pyo3(signature = (rho, lam, mu, gamma, delta, onset, slow_rate, fast_rate, lambda_support_start=None, quad_tol=1e-9))]
    #[allow(clippy::too_many_arguments)]
    fn with_pulse(
        rho: f64,
        lam: f64,
        mu: f64,
        gamma: f64,
        delta: f64,
        onset: f64,
        slow_rate: f64,
        fast_rate: f64,
        lambda_support_start: Option<f64>,
        quad_tol: f64,
    ) -> PyResult<Self> {
        let pulse = RateSchedule::piecewise_exp(vec![ExpSegment {
            start: onset,
            end: f64::INFINITY,
            terms: vec![
                ExpTerm { coeff: 1.0, rate: -slow_rate, origin: onset },
                ExpTerm { coeff: -1.0, rate: -fast_rate, origin: onset },
            ],
        }])
        .map_err(value_err)?;
        let input = match lambda_support_start {
            Some(start) => RateSchedule::step(start, lam),
            None => RateSchedule::constant(lam),
        };
        RsModel::with_profile(rho, input, RateSchedule::constant(mu), gamma, delta, pulse)
            .map(|inner| Self { inner: inner.with_quad_tol(quad_tol) })
            .map_err(value_err)
    }

    /// Deterministic maturation lag `1 / rho`.
    fn maturation_lag(&self) -> f64 {
        self.inner.maturation_lag()
    }

    /// Probability that a particle entering at `entry` survives maturation.
    fn survival_probability(&self, entry: f64) -> PyResult<f64> {
        self.inner.survival_probability(entry).map_err(value_err)
    }

    /// Post-maturation survival fraction over `[s, t]` (the thinning
    /// probability of the occupation law).
    fn mature_survival(&self, s: f64, t: f64) -> PyResult<f64> {
        self.inner.mature_survival(s, t).map_err(value_err)
    }

    /// Expected surviving new maturations over `(s, t]` (the Poisson mean of
    /// the occupation law).
    fn mature_influx(&self, s: f64, t: f64) -> PyResult<f64> {
        self.inner.mature_influx(s, t).map_err(value_err)
    }

    /// Single-quadrature cutoff-profile reduction of `mature_influx`.
    fn mature_influx_cutoff(&self, s: f64, t: f64) -> PyResult<f64> {
        self.inner.mature_influx_cutoff(s, t).map_err(value_err)
    }

    /// Conditional mean count given `m` mature particles at `s`.
    fn mean_count(&self, s: f64, t: f64, m: u64) -> PyResult<f64> {
        self.inner.mean_count(s, t, m).map_err(value_err)
    }

    /// Exact conditional law of the count at `t` given `m` at `s`.
    fn occupation_law(&self, s: f64, t: f64, m: u64) -> PyResult<PyLaw> {
        self.inner.occupation_law(s, t, m).map(|inner| PyLaw { inner }).map_err(value_err)
    }

    /// Mean count at `t` started from the drug-free equilibrium.
    fn equilibrium_mean(&self, t: f64) -> PyResult<f64> {
        self.inner.equilibrium_mean(t).map_err(value_err)
    }

    /// `equilibrium_mean` on an increasing grid (shared cumulative integral).
    fn equilibrium_mean_batch(&self, times: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.equilibrium_mean_batch(&times).map_err(value_err)
    }

    /// Compound input rate `lambda(t) * survival_probability(t)`.
    fn effective_input_rate(&self, t: f64) -> PyResult<f64> {
        effective_input_rate(&self.inner, t).map_err(value_err)
    }

    /// Observationally equivalent model with the input scaled by `theta` and
    /// the killing shifted by `rho * ln(theta)`.
    fn scale_input(&self, theta: f64) -> PyResult<PyModel> {
        scale_input(&self.inner, theta).map(|inner| PyModel { inner }).map_err(value_err)
    }

    /// Observationally equivalent model with unit input rate.
    fn normalize_unit_input(&self) -> PyResult<PyModel> {
        normalize_unit_input(&self.inner).map(|inner| PyModel { inner }).map_err(value_err)
    }

    /// Monte-Carlo counts of mature survivors at `sample_times`, one replica
    /// per stream index: returns a `replicas x len(sample_times)` list.
    #[pyo3(signature = (n0, t0, t1, sample_times, replicas, seed))]
    fn simulate_counts(
        &self,
        n0: u64,
        t0: f64,
        t1: f64,
        sample_times: Vec<f64>,
        replicas: u64,
        seed: u64,
    ) -> PyResult<Vec<Vec<u64>>> {
        (0..replicas)
            .map(|replica| {
                let mut rng = RngStream::new(seed, replica).rng();
                simulate_counting_process(&self.inner, n0, t0, t1, &sample_times, &mut rng)
                    .map_err(value_err)
            })
            .collect()
    }

    /// Simulate the count law at one time and compare with the exact law:
    /// returns a dict with the empirical pmf, exact pmf, total variation
    /// distance and chi-square p-value.
    #[pyo3(signature = (at, replicas, seed, n0=0))]
    fn simulate_law<'py>(
        &self,
        py: Python<'py>,
        at: f64,
        replicas: u64,
        seed: u64,
        n0: u64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let samples: Vec<u64> = (0..replicas)
            .map(|replica| {
                let mut rng = RngStream::new(seed, replica).rng();
                simulate_counting_process(&self.inner, n0, 0.0, at, &[at], &mut rng)
                    .map(|v| v[0])
                    .map_err(value_err)
            })
            .collect::<PyResult<_>>()?;
        let law = self.inner.occupation_law(0.0, at, n0).map_err(value_err)?;
        let pmf = empirical_pmf(&samples).map_err(value_err)?;
        let exact = law.pmf_vector();
        let out = PyDict::new(py);
        out.set_item("tv", tv(&pmf, &exact))?;
        if let Ok((stat, p)) = chi_square_gof(&samples, &law) {
            out.set_item("chi_square_statistic", stat)?;
            out.set_item("chi_square_p", p)?;
        } else {
            out.set_item("chi_square_statistic", py.None())?;
            out.set_item("chi_square_p", py.None())?;
        }
        out.set_item("pmf", pmf)?;
        out.set_item("exact_pmf", exact)?;
        out.set_item("mean", samples.iter().sum::<u64>() as f64 / replicas as f64)?;
        out.set_item("exact_mean", law.mean())?;
        Ok(out)
    }

    fn __repr__(&self) -> String {
        format!("ContinuousModel(rho={}, tau={})", self.inner.rho(), self.inner.maturation_lag())
    }
}

/// Last-compartment prediction of the n-compartment chain started at its
/// drug-free equilibrium, at the given times.
#[pyfunction]
#[pyo3(signature = (lam, rho, mu, gamma, n0, n, kinetics, times, ode_tol=1e-8))]
#[allow(clippy::too_many_arguments)]
fn predict_catenary(
    lam: f64,
    rho: f64,
    mu: f64,
    gamma: f64,
    n0: usize,
    n: usize,
    kinetics: PyDrugKinetics,
    times: Vec<f64>,
    ode_tol: f64,
) -> PyResult<Vec<f64>> {
    let params = RateParams { lambda: lam, rho, mu, gamma };
    predict_catenary_rs(&params, n0, n, &kinetics.inner, &times, ode_tol).map_err(value_err)
}

/// Equilibrium-start prediction of the continuous model at the given times.
#[pyfunction]
#[pyo3(signature = (lam, rho, mu, gamma, delta, kinetics, times, quad_tol=1e-10))]
#[allow(clippy::too_many_arguments)]
fn predict_equilibrium(
    lam: f64,
    rho: f64,
    mu: f64,
    gamma: f64,
    delta: f64,
    kinetics: PyDrugKinetics,
    times: Vec<f64>,
    quad_tol: f64,
) -> PyResult<Vec<f64>> {
    let params = RateParams { lambda: lam, rho, mu, gamma };
    predict_continuous(&params, delta, &kinetics.inner, &times, quad_tol).map_err(value_err)
}

/// Continuous-model predictions plus truncated Gaussian noise.
#[pyfunction]
#[pyo3(signature = (lam, rho, mu, gamma, delta, kinetics, times, noise_sd, seed))]
#[allow(clippy::too_many_arguments)]
fn synthetic_observations(
    lam: f64,
    rho: f64,
    mu: f64,
    gamma: f64,
    delta: f64,
    kinetics: PyDrugKinetics,
    times: Vec<f64>,
    noise_sd: f64,
    seed: u64,
) -> PyResult<Vec<(f64, f64)>> {
    let params = RateParams { lambda: lam, rho, mu, gamma };
    generate_synthetic(
        &params,
        Cutoff::Continuous(delta),
        &kinetics.inner,
        &times,
        noise_sd,
        &RngStream::new(seed, 0),
    )
    .map_err(value_err)
}

/// Least-squares fit of the continuous model. Bounds span `bound_factor`
/// both ways around the center guess.
#[pyfunction]
#[pyo3(signature = (times, values, kinetics, center, bound_factor=5.0, starts=8, max_iters=2000, seed=42))]
#[allow(clippy::too_many_arguments)]
fn fit_continuous<'py>(
    py: Python<'py>,
    times: Vec<f64>,
    values: Vec<f64>,
    kinetics: PyDrugKinetics,
    center: (f64, f64, f64, f64, f64),
    bound_factor: f64,
    starts: usize,
    max_iters: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    if times.len() != values.len() {
        return Err(PyValueError::new_err("times and values must have equal length"));
    }
    let (lam, rho, mu, gamma, delta) = center;
    let bounds =
        ParamBounds::around(&RateParams { lambda: lam, rho, mu, gamma }, delta, bound_factor);
    let options = FitOptions { starts, max_iters, ..FitOptions::default() };
    let observations: Vec<(f64, f64)> = times.into_iter().zip(values).collect();
    let problem =
        FitProblem::new(observations, ModelKind::Continuous, kinetics.inner, bounds, options)
            .map_err(value_err)?;
    let result = fit_rs(&problem, &RngStream::new(seed, 0)).map_err(value_err)?;
    let out = PyDict::new(py);
    out.set_item("lam", result.params.lambda)?;
    out.set_item("rho", result.params.rho)?;
    out.set_item("mu", result.params.mu)?;
    out.set_item("gamma", result.params.gamma)?;
    out.set_item("delta", result.delta)?;
    out.set_item("rss", result.rss)?;
    out.set_item("evaluations", result.evaluations)?;
    out.set_item("runtime_s", result.runtime_s)?;
    out.set_item("converged", result.converged)?;
    Ok(out)
}

/// Total variation distance between two pmf vectors.
#[pyfunction]
fn total_variation(p: Vec<f64>, q: Vec<f64>) -> f64 {
    tv(&p, &q)
}

#[pymodule]
fn maturix_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDrugKinetics>()?;
    m.add_class::<PyLaw>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(predict_catenary, m)?)?;
    m.add_function(wrap_pyfunction!(predict_equilibrium, m)?)?;
    m.add_function(wrap_pyfunction!(synthetic_observations, m)?)?;
    m.add_function(wrap_pyfunction!(fit_continuous, m)?)?;
    m.add_function(wrap_pyfunction!(total_variation, m)?)?;
    Ok(())
}
