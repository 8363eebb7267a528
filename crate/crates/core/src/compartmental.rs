//! Finite compartmental systems with time-dependent linear rates and their
//! deterministic dynamics.
//!
//! The state is a per-compartment quantity vector `Q(t)` obeying
//! `dQ/dt = M(t) Q + lambda(t)` where `M(t)` collects transfer and outflow
//! rates. Integration uses an explicit Dormand-Prince 5(4) pair with step
//! rejection; the grid is restarted at every schedule breakpoint so the
//! piecewise-smooth rates never sit inside a step.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::schedule::RateSchedule;

/// A finite set of compartments with inflow, outflow and transfer schedules.
#[derive(Debug, Clone)]
pub struct CompartmentalSystem {
    n: usize,
    inflow: Vec<RateSchedule>,
    outflow: Vec<RateSchedule>,
    /// `(from, to, rate)` with `from != to`.
    transfer: Vec<(usize, usize, RateSchedule)>,
    allow_amplification: bool,
}

impl CompartmentalSystem {
    /// Build and validate a system. Negative rate values are rejected unless
    /// `allow_amplification` is set (negative outflow then mimics
    /// proportional auto-inflow).
    pub fn new(
        inflow: Vec<RateSchedule>,
        outflow: Vec<RateSchedule>,
        transfer: Vec<(usize, usize, RateSchedule)>,
        allow_amplification: bool,
    ) -> Result<Self> {
        let n = inflow.len();
        if n == 0 {
            return Err(Error::EmptyInput("compartment set"));
        }
        if outflow.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: outflow.len() });
        }
        for &(i, j, _) in &transfer {
            if i == j {
                return Err(Error::InvalidInput(format!("diagonal transfer entry ({i}, {j})")));
            }
            if i >= n || j >= n {
                return Err(Error::InvalidInput(format!(
                    "transfer ({i}, {j}) out of range for {n} compartments"
                )));
            }
        }
        if !allow_amplification {
            for s in inflow.iter().chain(outflow.iter()).chain(transfer.iter().map(|t| &t.2)) {
                if !s.is_nonnegative() {
                    return Err(Error::NegativeRate { at: f64::NAN, value: f64::NAN });
                }
            }
        }
        Ok(Self { n, inflow, outflow, transfer, allow_amplification })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn allows_amplification(&self) -> bool {
        self.allow_amplification
    }

    pub fn inflow(&self, i: usize) -> &RateSchedule {
        &self.inflow[i]
    }

    pub fn outflow(&self, i: usize) -> &RateSchedule {
        &self.outflow[i]
    }

    pub fn transfers(&self) -> &[(usize, usize, RateSchedule)] {
        &self.transfer
    }

    /// Sorted breakpoints of every schedule in the system.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut bps: Vec<f64> = self
            .inflow
            .iter()
            .chain(self.outflow.iter())
            .chain(self.transfer.iter().map(|t| &t.2))
            .flat_map(|s| s.breakpoints().iter().copied())
            .collect();
        bps.sort_by(f64::total_cmp);
        bps.dedup();
        bps
    }

    /// Transfer matrix `M(t)`: entry `(i, j)` is the rate from `j` into `i`
    /// for `i != j`; diagonal entry `i` is minus the total outflow rate of
    /// compartment `i` (transfers out plus elimination).
    pub fn transfer_matrix(&self, t: f64) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            m[(i, i)] = -self.outflow[i].value(t);
        }
        for (from, to, rate) in &self.transfer {
            let r = rate.value(t);
            m[(*to, *from)] += r;
            m[(*from, *from)] -= r;
        }
        m
    }

    /// Inflow vector `lambda(t)`.
    pub fn inflow_vector(&self, t: f64) -> DVector<f64> {
        DVector::from_iterator(self.n, self.inflow.iter().map(|s| s.value(t)))
    }

    /// Affine drift `lambda(t) + M(t) q`.
    pub fn drift(&self, t: f64, q: &[f64]) -> Result<Vec<f64>> {
        if q.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: q.len() });
        }
        let mut out = vec![0.0; self.n];
        self.drift_into(t, q, &mut out);
        Ok(out)
    }

    /// Drift evaluated without the dense matrix; inner loop of the integrator.
    fn drift_into(&self, t: f64, q: &[f64], out: &mut [f64]) {
        for i in 0..self.n {
            out[i] = self.inflow[i].value(t) - self.outflow[i].value(t) * q[i];
        }
        for (from, to, rate) in &self.transfer {
            let flux = rate.value(t) * q[*from];
            out[*to] += flux;
            out[*from] -= flux;
        }
    }
}

/// Time grid plus per-compartment values produced by [`integrate`].
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    /// Derivatives at each accepted point, kept for dense interpolation.
    derivs: Vec<Vec<f64>>,
    /// Mixed absolute/relative tolerance the solution was controlled at.
    pub tolerance: f64,
}

impl Trajectory {
    pub fn last(&self) -> &[f64] {
        self.values.last().expect("trajectory is never empty")
    }

    /// Cubic Hermite interpolation between accepted steps (4th-order accurate
    /// against the order-5 solution underneath).
    pub fn sample(&self, t: f64) -> Vec<f64> {
        let times = &self.times;
        if t <= times[0] {
            return self.values[0].clone();
        }
        if t >= *times.last().unwrap() {
            return self.values.last().unwrap().clone();
        }
        let idx = match times.binary_search_by(|x| x.total_cmp(&t)) {
            Ok(i) => return self.values[i].clone(),
            Err(i) => i - 1,
        };
        let (t0, t1) = (times[idx], times[idx + 1]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let (y0, y1) = (&self.values[idx], &self.values[idx + 1]);
        let (d0, d1) = (&self.derivs[idx], &self.derivs[idx + 1]);
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        (0..y0.len())
            .map(|i| h00 * y0[i] + h10 * h * d0[i] + h01 * y1[i] + h11 * h * d1[i])
            .collect()
    }
}

const DEFAULT_TOL: f64 = 1e-8;
const MAX_STEPS_PER_SEGMENT: usize = 2_000_000;

/// Default mixed absolute/relative tolerance for [`integrate`].
pub fn default_tolerance() -> f64 {
    DEFAULT_TOL
}

/// Integrate `dQ/dt = lambda(t) + M(t) Q` from `q0` over `[t0, t1]`.
///
/// Local error is controlled at `tol` (mixed absolute/relative); integration
/// restarts at every schedule breakpoint inside the window. Fails with
/// [`Error::StepSizeUnderflow`] when the controller pushes the step below
/// representable size (the stiffness signal of an explicit method) and with
/// [`Error::NonFiniteState`] if the state leaves the finite range.
pub fn integrate(
    system: &CompartmentalSystem,
    q0: &[f64],
    t0: f64,
    t1: f64,
    tol: f64,
) -> Result<Trajectory> {
    if q0.len() != system.len() {
        return Err(Error::DimensionMismatch { expected: system.len(), got: q0.len() });
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("tol must be > 0, got {tol}")));
    }
    if t1 < t0 {
        return Err(Error::InvalidInput(format!("t1 = {t1} precedes t0 = {t0}")));
    }

    let mut traj = Trajectory {
        times: vec![t0],
        values: vec![q0.to_vec()],
        derivs: vec![system.drift(t0, q0)?],
        tolerance: tol,
    };
    if t0 == t1 {
        return Ok(traj);
    }

    let mut edges: Vec<f64> =
        system.breakpoints().into_iter().filter(|&b| t0 < b && b < t1).collect();
    edges.push(t1);

    let mut t = t0;
    let mut y = q0.to_vec();
    for edge in edges {
        rk45_segment(system, &mut t, &mut y, edge, tol, &mut traj)?;
    }
    Ok(traj)
}

/// Integrate and report the solution on `times` (which must be increasing and
/// start at or after `t0`) via dense interpolation.
pub fn integrate_on_grid(
    system: &CompartmentalSystem,
    q0: &[f64],
    t0: f64,
    times: &[f64],
    tol: f64,
) -> Result<Trajectory> {
    if times.is_empty() {
        return Err(Error::EmptyInput("output grid"));
    }
    if times.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("output grid must be strictly increasing".into()));
    }
    if times[0] < t0 {
        return Err(Error::InvalidInput(format!(
            "output grid starts at {} before t0 = {t0}",
            times[0]
        )));
    }
    let full = integrate(system, q0, t0, *times.last().unwrap(), tol)?;
    let values: Vec<Vec<f64>> = times.iter().map(|&t| full.sample(t)).collect();
    let derivs = times
        .iter()
        .zip(values.iter())
        .map(|(&t, v)| system.drift(t, v))
        .collect::<Result<Vec<_>>>()?;
    Ok(Trajectory { times: times.to_vec(), values, derivs, tolerance: tol })
}

// Dormand-Prince 5(4) coefficients.
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
// 5th-order weights equal the last A row (FSAL); error weights follow.
const E: [f64; 7] = [
    35.0 / 384.0 - 5179.0 / 57600.0,
    0.0,
    500.0 / 1113.0 - 7571.0 / 16695.0,
    125.0 / 192.0 - 393.0 / 640.0,
    -2187.0 / 6784.0 + 92097.0 / 339200.0,
    11.0 / 84.0 - 187.0 / 2100.0,
    -1.0 / 40.0,
];

fn rk45_segment(
    system: &CompartmentalSystem,
    t: &mut f64,
    y: &mut Vec<f64>,
    t_end: f64,
    tol: f64,
    traj: &mut Trajectory,
) -> Result<()> {
    let n = y.len();
    let span = t_end - *t;
    if span <= 0.0 {
        return Ok(());
    }
    let mut k = vec![vec![0.0; n]; 7];
    let mut y_stage = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    let mut h = (span * 1e-2).min(1.0).max(1e-10);
    system.drift_into(*t, y, &mut k[0]);

    for _ in 0..MAX_STEPS_PER_SEGMENT {
        if *t >= t_end {
            return Ok(());
        }
        h = h.min(t_end - *t);
        let h_floor = 1e-14 * (1.0 + t.abs());
        if h < h_floor {
            return Err(Error::StepSizeUnderflow { t: *t });
        }

        for stage in 0..6 {
            for i in 0..n {
                let mut acc = 0.0;
                for (j, kj) in k.iter().enumerate().take(stage + 1) {
                    acc += A[stage][j] * kj[i];
                }
                y_stage[i] = y[i] + h * acc;
            }
            let ts = *t + C[stage] * h;
            if stage == 5 {
                y_new.copy_from_slice(&y_stage);
            }
            system.drift_into(ts, &y_stage, &mut k[stage + 1]);
        }

        let mut err_norm = 0.0f64;
        for i in 0..n {
            let e: f64 = (0..7).map(|j| E[j] * k[j][i]).sum::<f64>() * h;
            let scale = tol + tol * y[i].abs().max(y_new[i].abs());
            err_norm += (e / scale) * (e / scale);
        }
        err_norm = (err_norm / n as f64).sqrt();

        if err_norm <= 1.0 {
            *t += h;
            if y_new.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteState { t: *t });
            }
            y.copy_from_slice(&y_new);
            let (head, tail) = k.split_at_mut(1);
            head[0].copy_from_slice(&tail[5]); // FSAL
            traj.times.push(*t);
            traj.values.push(y.clone());
            traj.derivs.push(k[0].clone());
        }

        let factor = if err_norm == 0.0 {
            5.0
        } else {
            (0.9 * err_norm.powf(-0.2)).clamp(0.2, 5.0)
        };
        h *= factor;
    }
    Err(Error::StepSizeUnderflow { t: *t })
}

/// The single-inflow chain of `n` compartments with drug-driven elimination
/// on the first `n0` and constant elimination on the last:
///
/// `dQ_1 = lambda - rho Q_1 - gamma q(t) Q_1`,
/// `dQ_i = rho Q_{i-1} - rho Q_i - gamma q(t) Q_i` up to `n0`,
/// plain transfer afterwards, and `dQ_n = rho Q_{n-1} - mu Q_n`.
pub fn catenary_system(
    n: usize,
    lambda: f64,
    rho: f64,
    mu: f64,
    gamma: f64,
    n0: usize,
    q: &RateSchedule,
) -> Result<CompartmentalSystem> {
    if n < 2 {
        return Err(Error::InvalidInput(format!("catenary needs n >= 2, got {n}")));
    }
    if n0 < 1 || n0 > n - 1 {
        return Err(Error::InvalidInput(format!("n0 must be in [1, {}], got {n0}", n - 1)));
    }
    if lambda < 0.0 || rho < 0.0 || mu < 0.0 || gamma < 0.0 {
        return Err(Error::InvalidInput("catenary rates must be nonnegative".into()));
    }
    let mut inflow = vec![RateSchedule::zero(); n];
    inflow[0] = RateSchedule::constant(lambda);
    let mut outflow = vec![RateSchedule::zero(); n];
    for slot in outflow.iter_mut().take(n0) {
        *slot = q.clone().scaled(gamma);
    }
    outflow[n - 1] = RateSchedule::constant(mu);
    let transfer = (0..n - 1)
        .map(|i| (i, i + 1, RateSchedule::constant(rho)))
        .collect();
    CompartmentalSystem::new(inflow, outflow, transfer, false)
}

/// Drug-free equilibrium `(lambda/rho, ..., lambda/rho, lambda/mu)`.
pub fn equilibrium_init(lambda: f64, rho: f64, mu: f64, n: usize) -> Result<Vec<f64>> {
    if rho == 0.0 || mu == 0.0 {
        return Err(Error::InvalidInput("equilibrium needs rho > 0 and mu > 0".into()));
    }
    let mut q = vec![lambda / rho; n];
    q[n - 1] = lambda / mu;
    Ok(q)
}
