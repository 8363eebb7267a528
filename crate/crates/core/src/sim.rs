//! Monte-Carlo engines: the interacting-queue network, the single-particle
//! maturation chain and its continuous limit, and the counting process of
//! mature survivors.
//!
//! Every generator uses thinning against piecewise-constant majorants built
//! from the declared breakpoints (supremum over each piece, dense-sampled
//! with a 5% safety factor where no exact bound exists). Replicas draw from
//! counter-addressed streams so parallel and serial runs agree bit for bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::compartmental::CompartmentalSystem;
use crate::error::{Error, Result};
use crate::model::{ContinuousModel, KillingField};
use crate::schedule::RateSchedule;

/// Addressable random stream: the same `(master seed, stream index)` pair
/// reproduces the same draws regardless of scheduling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStream {
    pub master_seed: u64,
    pub stream: u64,
}

impl RngStream {
    pub fn new(master_seed: u64, stream: u64) -> Self {
        Self { master_seed, stream }
    }

    /// Materialize the generator for this stream.
    pub fn rng(&self) -> ChaCha12Rng {
        let mut rng = ChaCha12Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream);
        rng
    }
}

fn exp_draw(rng: &mut impl Rng, rate: f64) -> f64 {
    debug_assert!(rate > 0.0);
    let u: f64 = rng.random();
    -(1.0 - u).ln() / rate
}

/// Sorted event times of a point process on a window.
#[derive(Debug, Clone, Default)]
pub struct PointSet {
    times: Vec<f64>,
}

impl PointSet {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Outcome of one simulated particle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParticleOutcome {
    /// Reached full maturation; `death_time` is the post-maturation
    /// elimination time when one occurs within the elimination hazard.
    Matured { maturation_time: f64, death_time: Option<f64> },
    /// Killed during maturation.
    Killed { killing_time: f64 },
}

impl ParticleOutcome {
    pub fn matured(&self) -> bool {
        matches!(self, ParticleOutcome::Matured { .. })
    }
}

/// Piecewise-constant jump path of the particle network.
#[derive(Debug, Clone)]
pub struct JumpPath {
    /// Jump times, starting with the window opening.
    pub times: Vec<f64>,
    /// Occupation vectors after each jump (first entry is the initial state).
    pub states: Vec<Vec<u64>>,
}

impl JumpPath {
    /// State at time `t` (right-continuous).
    pub fn state_at(&self, t: f64) -> &[u64] {
        let idx = match self.times.binary_search_by(|x| x.total_cmp(&t)) {
            Ok(i) => i,
            Err(0) => 0,
            Err(i) => i - 1,
        };
        &self.states[idx]
    }

    pub fn jump_count(&self) -> usize {
        self.times.len() - 1
    }
}

/// Sample an inhomogeneous Poisson process on `[t0, t1]` by thinning against
/// a piecewise-constant majorant built between the intensity's breakpoints.
pub fn sample_inhomogeneous_poisson(
    intensity: &RateSchedule,
    t0: f64,
    t1: f64,
    rng: &mut impl Rng,
) -> Result<PointSet> {
    if t1 < t0 {
        return Err(Error::InvalidInput(format!("window end {t1} precedes start {t0}")));
    }
    let mut edges: Vec<f64> =
        intensity.breakpoints().iter().copied().filter(|&b| t0 < b && b < t1).collect();
    edges.insert(0, t0);
    edges.push(t1);
    let mut times = Vec::new();
    for pair in edges.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let bound = intensity.sup_on(a, b);
        if !bound.is_finite() {
            return Err(Error::UnboundedIntensity { from: a, to: b });
        }
        if bound <= 0.0 {
            continue;
        }
        let mut t = a;
        loop {
            t += exp_draw(rng, bound);
            if t >= b {
                break;
            }
            let u: f64 = rng.random();
            if u * bound <= intensity.value(t) {
                times.push(t);
            }
        }
    }
    Ok(PointSet { times })
}

/// Per-interval rate bounds of a network, reused across states.
struct IntervalBounds {
    inflow_total: f64,
    /// Outflow plus all transfers out, per compartment.
    per_unit_out: Vec<f64>,
}

fn interval_bounds(system: &CompartmentalSystem, a: f64, b: f64) -> Result<IntervalBounds> {
    let n = system.len();
    let mut inflow_total = 0.0;
    let mut per_unit_out = vec![0.0; n];
    for i in 0..n {
        let s = system.inflow(i).sup_on(a, b);
        let o = system.outflow(i).sup_on(a, b);
        if !s.is_finite() || !o.is_finite() {
            return Err(Error::UnboundedIntensity { from: a, to: b });
        }
        inflow_total += s;
        per_unit_out[i] = o;
    }
    for (from, _, rate) in system.transfers() {
        let r = rate.sup_on(a, b);
        if !r.is_finite() {
            return Err(Error::UnboundedIntensity { from: a, to: b });
        }
        per_unit_out[*from] += r;
    }
    Ok(IntervalBounds { inflow_total, per_unit_out })
}

/// Exact simulation of the particle network: births at the inflow rates,
/// proportional transfers and deaths, all time-inhomogeneous. The jump bound
/// refreshes at schedule breakpoints and after every jump.
pub fn simulate_network(
    system: &CompartmentalSystem,
    x0: &[u64],
    t0: f64,
    t1: f64,
    rng: &mut impl Rng,
) -> Result<JumpPath> {
    if x0.len() != system.len() {
        return Err(Error::DimensionMismatch { expected: system.len(), got: x0.len() });
    }
    if t1 < t0 {
        return Err(Error::InvalidInput(format!("window end {t1} precedes start {t0}")));
    }
    let n = system.len();
    let mut edges: Vec<f64> =
        system.breakpoints().into_iter().filter(|&b| t0 < b && b < t1).collect();
    edges.push(t1);

    let mut path = JumpPath { times: vec![t0], states: vec![x0.to_vec()] };
    let mut state = x0.to_vec();
    let mut t = t0;
    let mut rates = vec![0.0f64; n + n + system.transfers().len()];

    for &edge in &edges {
        let bounds = interval_bounds(system, t, edge)?;
        loop {
            let total_bound = bounds.inflow_total
                + state
                    .iter()
                    .zip(bounds.per_unit_out.iter())
                    .map(|(&x, &r)| x as f64 * r)
                    .sum::<f64>();
            if total_bound <= 0.0 {
                break;
            }
            let dt = exp_draw(rng, total_bound);
            if t + dt >= edge {
                break;
            }
            t += dt;

            // actual rates at the candidate time
            let mut total = 0.0;
            for i in 0..n {
                rates[i] = system.inflow(i).value(t);
                total += rates[i];
            }
            for i in 0..n {
                rates[n + i] = state[i] as f64 * system.outflow(i).value(t);
                total += rates[n + i];
            }
            for (k, (from, _, rate)) in system.transfers().iter().enumerate() {
                rates[2 * n + k] = state[*from] as f64 * rate.value(t);
                total += rates[2 * n + k];
            }

            let u: f64 = rng.random::<f64>() * total_bound;
            if u >= total {
                continue; // thinned
            }
            let mut acc = 0.0;
            let mut chosen = rates.len() - 1;
            for (idx, &r) in rates.iter().enumerate() {
                acc += r;
                if u < acc {
                    chosen = idx;
                    break;
                }
            }
            if chosen < n {
                state[chosen] += 1;
            } else if chosen < 2 * n {
                state[chosen - n] -= 1;
            } else {
                let (from, to, _) = system.transfers()[chosen - 2 * n];
                state[from] -= 1;
                state[to] += 1;
            }
            path.times.push(t);
            path.states.push(state.clone());
        }
        t = edge;
    }
    Ok(path)
}

/// One particle on the discrete maturation chain: states `0..n`, upward hops
/// at rate `n * rho`, killing at `kappa(t, i/n)`. Matured means reaching
/// state `n` before being killed.
pub fn simulate_particle_chain(
    n: usize,
    rho: f64,
    kappa: &KillingField,
    start: f64,
    rng: &mut impl Rng,
) -> Result<ParticleOutcome> {
    if n == 0 {
        return Err(Error::InvalidInput("chain needs at least one step".into()));
    }
    if !(rho > 0.0) {
        return Err(Error::InvalidInput(format!("rho must be > 0, got {rho}")));
    }
    let hop_rate = n as f64 * rho;
    let mut t = start;
    let mut state = 0usize;
    loop {
        let x = state as f64 / n as f64;
        // next killing-rate breakpoint after t bounds the current majorant span
        let edge = kappa
            .time_breakpoints()
            .iter()
            .copied()
            .find(|&b| b > t)
            .unwrap_or(f64::INFINITY)
            .min(t + 64.0 / hop_rate);
        let kill_bound = kappa.sup_on_at(t, edge, x);
        if !kill_bound.is_finite() {
            return Err(Error::UnboundedIntensity { from: t, to: edge });
        }
        let total = hop_rate + kill_bound;
        let dt = exp_draw(rng, total);
        if t + dt >= edge {
            t = edge;
            continue;
        }
        t += dt;
        let u: f64 = rng.random::<f64>() * total;
        if u < hop_rate {
            state += 1;
            if state == n {
                return Ok(ParticleOutcome::Matured { maturation_time: t, death_time: None });
            }
        } else if u < hop_rate + kappa.rate(t, x) {
            return Ok(ParticleOutcome::Killed { killing_time: t });
        }
    }
}

/// Elimination time after `from` under the hazard `mu(t)`, by inverting the
/// cumulative hazard against a unit-exponential draw. `None` when the total
/// remaining hazard never reaches the draw.
pub fn sample_elimination_time(
    mu: &RateSchedule,
    from: f64,
    rng: &mut impl Rng,
) -> Result<Option<f64>> {
    let target = {
        let u: f64 = rng.random();
        -(1.0 - u).ln()
    };
    let hazard_to = |t: f64| -> Result<f64> {
        match mu.exact_integral(from, t) {
            Some(v) => Ok(v),
            None => crate::quad::integrate_adaptive(
                |w| mu.value(w),
                from,
                t,
                mu.breakpoints(),
                1e-10,
            ),
        }
    };
    // bracket by doubling; the hazard is exhausted only once the span has
    // cleared every breakpoint and stopped accumulating
    let last_bp = mu.breakpoints().last().copied().unwrap_or(from);
    let mut span = 1.0;
    let mut reached = hazard_to(from + span)?;
    let mut doublings = 0;
    while reached < target {
        span *= 2.0;
        let next = hazard_to(from + span)?;
        doublings += 1;
        let stalled = (next - reached).abs() <= 1e-14 * (1.0 + next.abs());
        reached = next;
        if reached < target && ((stalled && from + span > last_bp) || doublings > 100) {
            return Ok(None); // hazard exhausted below the draw
        }
    }
    let (mut lo, mut hi) = (from + span / 2.0, from + span);
    if span == 1.0 {
        lo = from;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hazard_to(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * (1.0 + hi.abs()) {
            break;
        }
    }
    Ok(Some(0.5 * (lo + hi)))
}

/// One particle of the continuous limit: deterministic drift through the
/// maturation interval, killed at the first event of the inhomogeneous rate
/// along its characteristic; on survival it matures at exactly `start + tau`
/// and then faces the post-maturation elimination hazard.
pub fn simulate_limit_particle(
    model: &ContinuousModel,
    start: f64,
    rng: &mut impl Rng,
) -> Result<ParticleOutcome> {
    let tau = model.maturation_lag();
    let mature_at = start + tau;
    let mut refresh: Vec<f64> = model
        .killing_time_breakpoints()
        .into_iter()
        .filter(|&b| start < b && b < mature_at)
        .collect();
    refresh.push(mature_at);

    let mut t = start;
    'intervals: for &edge in &refresh {
        let bound = model.killing_sup_along(start, t, edge);
        if !bound.is_finite() {
            return Err(Error::UnboundedIntensity { from: t, to: edge });
        }
        if bound <= 0.0 {
            t = edge;
            continue;
        }
        loop {
            let dt = exp_draw(rng, bound);
            if t + dt >= edge {
                t = edge;
                continue 'intervals;
            }
            t += dt;
            let x = (model.rho() * (t - start)).min(1.0 - 1e-15);
            let u: f64 = rng.random::<f64>() * bound;
            if u < model.killing_rate(t, x) {
                return Ok(ParticleOutcome::Killed { killing_time: t });
            }
        }
    }
    let death_time = sample_elimination_time(model.mu(), mature_at, rng)?;
    Ok(ParticleOutcome::Matured { maturation_time: mature_at, death_time })
}

/// Counts of mature survivors at `sample_times`, built from the three
/// independent sources of randomness: Poisson initiation times on
/// `[t0 - tau, t1]`, Bernoulli survival marks against the maturation
/// survival probability, and independent post-maturation lifetimes. The
/// `n0` particles mature at `t0` draw lifetimes from `t0`.
pub fn simulate_counting_process(
    model: &ContinuousModel,
    n0: u64,
    t0: f64,
    t1: f64,
    sample_times: &[f64],
    rng: &mut impl Rng,
) -> Result<Vec<u64>> {
    if sample_times.iter().any(|&t| t < t0 || t > t1) {
        return Err(Error::InvalidInput("sample times must lie in [t0, t1]".into()));
    }
    let tau = model.maturation_lag();
    let mut counts = vec![0u64; sample_times.len()];
    let add_lifetime = |birth: f64, death: Option<f64>, counts: &mut Vec<u64>| {
        for (slot, &st) in counts.iter_mut().zip(sample_times.iter()) {
            if st >= birth && death.is_none_or(|d| st < d) {
                *slot += 1;
            }
        }
    };

    for _ in 0..n0 {
        let death = sample_elimination_time(model.mu(), t0, rng)?;
        add_lifetime(t0, death, &mut counts);
    }

    let initiations = sample_inhomogeneous_poisson(model.lambda(), t0 - tau, t1, rng)?;
    for &entry in initiations.times() {
        let p = model.survival_probability(entry)?;
        if p > 1.0 + 1e-12 {
            return Err(Error::InvalidInput(
                "survival probability exceeds 1; amplification cannot be simulated".into(),
            ));
        }
        let u: f64 = rng.random();
        if u >= p {
            continue;
        }
        let mature_at = entry + tau;
        if mature_at > t1 {
            continue;
        }
        let death = sample_elimination_time(model.mu(), mature_at, rng)?;
        add_lifetime(mature_at, death, &mut counts);
    }
    Ok(counts)
}

/// Normalized histogram of integer samples.
pub fn empirical_pmf(samples: &[u64]) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("empirical_pmf samples"));
    }
    let max = *samples.iter().max().unwrap() as usize;
    let mut pmf = vec![0.0; max + 1];
    for &s in samples {
        pmf[s as usize] += 1.0;
    }
    let n = samples.len() as f64;
    for slot in pmf.iter_mut() {
        *slot /= n;
    }
    Ok(pmf)
}
