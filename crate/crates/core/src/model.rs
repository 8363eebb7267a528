//! The continuous maturation limit.
//!
//! A particle entering at time `T` drifts through the maturation interval
//! `[0, 1]` at speed `rho`, is exposed to a space-time killing rate
//! `g(t, x)` on the way, matures after the deterministic lag `tau = 1/rho`,
//! and is then eliminated at rate `mu(t)`. With Poisson input of intensity
//! `lambda(t)`, the number of mature survivors has the exact law
//! `Binomial(m, alpha) * Poisson(beta)` computed here.

use std::sync::Arc;

use crate::dist::BinomialPoissonLaw;
use crate::error::{Error, Result};
use crate::quad::{integrate_adaptive, DEFAULT_QUAD_TOL};
use crate::schedule::RateSchedule;

/// A killing rate on time x maturation-stage space, with declared time
/// breakpoints. The stage coordinate lives in `[0, 1)`.
#[derive(Clone)]
pub struct KillingField {
    eval: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    time_breakpoints: Vec<f64>,
    stage_breakpoints: Vec<f64>,
}

impl std::fmt::Debug for KillingField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "KillingField({} time breakpoints)", self.time_breakpoints.len())
    }
}

impl KillingField {
    pub fn new(
        eval: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        mut time_breakpoints: Vec<f64>,
    ) -> Self {
        time_breakpoints.sort_by(f64::total_cmp);
        time_breakpoints.dedup();
        Self { eval: Arc::new(eval), time_breakpoints, stage_breakpoints: Vec::new() }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(move |_, _| c, Vec::new())
    }

    /// Declare maturation stages in `[0, 1)` where the field may lose
    /// smoothness (cutoff edges and the like).
    pub fn with_stage_breakpoints(mut self, mut stages: Vec<f64>) -> Self {
        stages.sort_by(f64::total_cmp);
        stages.dedup();
        self.stage_breakpoints = stages;
        self
    }

    pub fn stage_breakpoints(&self) -> &[f64] {
        &self.stage_breakpoints
    }

    /// Rate at time `t` and maturation stage `x in [0, 1)`.
    pub fn rate(&self, t: f64, x: f64) -> f64 {
        (self.eval)(t, x)
    }

    pub fn time_breakpoints(&self) -> &[f64] {
        &self.time_breakpoints
    }

    /// Upper bound for the rate at fixed stage `x` over times `[t0, t1]`:
    /// the maximum over a dense sample (endpoints included) inflated by 5%.
    pub fn sup_on_at(&self, t0: f64, t1: f64, x: f64) -> f64 {
        const SAMPLES: usize = 17;
        let mut hi: f64 = 0.0;
        for i in 0..=SAMPLES {
            let t = t0 + (t1 - t0).min(1e12) * i as f64 / SAMPLES as f64;
            hi = hi.max(self.rate(t, x));
        }
        for &b in &self.time_breakpoints {
            if t0 < b && b < t1 {
                hi = hi.max(self.rate(b, x)).max(self.rate(b - 1e-12 * (1.0 + b.abs()), x));
            }
        }
        hi.max(0.0) * 1.05
    }
}

/// Killing specification during maturation.
#[derive(Debug, Clone)]
enum Killing {
    /// `gamma * q(t)` on stages `[0, delta)`, nothing between `delta` and 1.
    Profile { gamma: f64, delta: f64, q: RateSchedule },
    /// General field `g(t, x)`.
    Field(KillingField),
    /// `base + shift` on all maturation stages (input-rescaling transform).
    Offset { base: Box<Killing>, shift: f64 },
}

/// The quadruple (maturation speed, input intensity, post-maturation killing,
/// killing-during-maturation) describing the continuous model.
#[derive(Debug, Clone)]
pub struct ContinuousModel {
    rho: f64,
    lambda: RateSchedule,
    mu: RateSchedule,
    killing: Killing,
    allow_amplification: bool,
    quad_tol: f64,
}

impl ContinuousModel {
    /// Model with the cutoff profile `g(t, x) = gamma * q(t) * 1_{[0, delta)}(x)`.
    pub fn with_profile(
        rho: f64,
        lambda: RateSchedule,
        mu: RateSchedule,
        gamma: f64,
        delta: f64,
        q: RateSchedule,
    ) -> Result<Self> {
        if gamma < 0.0 {
            return Err(Error::InvalidInput(format!("gamma must be >= 0, got {gamma}")));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(Error::InvalidInput(format!("delta must lie in [0, 1), got {delta}")));
        }
        Self::build(rho, lambda, mu, Killing::Profile { gamma, delta, q })
    }

    /// Model with a general killing field.
    pub fn with_field(
        rho: f64,
        lambda: RateSchedule,
        mu: RateSchedule,
        field: KillingField,
    ) -> Result<Self> {
        Self::build(rho, lambda, mu, Killing::Field(field))
    }

    fn build(rho: f64, lambda: RateSchedule, mu: RateSchedule, killing: Killing) -> Result<Self> {
        if !(rho > 0.0) {
            return Err(Error::InvalidInput(format!("rho must be > 0, got {rho}")));
        }
        let model = Self {
            rho,
            lambda,
            mu,
            killing,
            allow_amplification: false,
            quad_tol: DEFAULT_QUAD_TOL,
        };
        model.validate_nonnegative()?;
        Ok(model)
    }

    fn validate_nonnegative(&self) -> Result<()> {
        if self.allow_amplification {
            return Ok(());
        }
        if !self.lambda.is_nonnegative() || !self.mu.is_nonnegative() {
            return Err(Error::NegativeRate { at: f64::NAN, value: f64::NAN });
        }
        match &self.killing {
            Killing::Profile { gamma, q, .. } => {
                if *gamma > 0.0 && !q.is_nonnegative() {
                    return Err(Error::NegativeRate { at: f64::NAN, value: f64::NAN });
                }
            }
            Killing::Field(_) | Killing::Offset { .. } => {
                // sampled check along a few characteristics
                let tau = self.maturation_lag();
                let bps = self.killing_time_breakpoints();
                let t_lo = bps.first().copied().unwrap_or(0.0) - tau;
                let t_hi = bps.last().copied().unwrap_or(1.0) + tau;
                for i in 0..=64 {
                    let t = t_lo + (t_hi - t_lo) * i as f64 / 64.0;
                    for j in 0..8 {
                        let x = j as f64 / 8.0;
                        let v = self.killing_rate(t, x);
                        if v < -1e-12 {
                            return Err(Error::NegativeRate { at: t, value: v });
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Permit negative killing values (input-rate amplification reading).
    pub fn allow_amplification(mut self) -> Self {
        self.allow_amplification = true;
        self
    }

    pub fn amplification_allowed(&self) -> bool {
        self.allow_amplification
    }

    /// Override the quadrature tolerance used by the integral operations.
    pub fn with_quad_tol(mut self, tol: f64) -> Self {
        self.quad_tol = tol;
        self
    }

    pub fn quad_tol(&self) -> f64 {
        self.quad_tol
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn lambda(&self) -> &RateSchedule {
        &self.lambda
    }

    pub fn mu(&self) -> &RateSchedule {
        &self.mu
    }

    /// `(gamma, delta, q)` when the killing is the cutoff profile.
    pub fn profile(&self) -> Option<(f64, f64, &RateSchedule)> {
        match &self.killing {
            Killing::Profile { gamma, delta, q } => Some((*gamma, *delta, q)),
            _ => None,
        }
    }

    /// Deterministic maturation lag `tau = 1/rho`.
    pub fn maturation_lag(&self) -> f64 {
        1.0 / self.rho
    }

    /// Killing rate during maturation at time `t`, stage `x in [0, 1)`.
    pub fn killing_rate(&self, t: f64, x: f64) -> f64 {
        fn eval(k: &Killing, t: f64, x: f64) -> f64 {
            match k {
                Killing::Profile { gamma, delta, q } => {
                    if x < *delta {
                        gamma * q.value(t)
                    } else {
                        0.0
                    }
                }
                Killing::Field(f) => f.rate(t, x),
                Killing::Offset { base, shift } => eval(base, t, x) + shift,
            }
        }
        eval(&self.killing, t, x)
    }

    /// Times where the killing may lose smoothness.
    pub fn killing_time_breakpoints(&self) -> Vec<f64> {
        fn collect(k: &Killing, out: &mut Vec<f64>) {
            match k {
                Killing::Profile { q, .. } => out.extend_from_slice(q.breakpoints()),
                Killing::Field(f) => out.extend_from_slice(f.time_breakpoints()),
                Killing::Offset { base, .. } => collect(base, out),
            }
        }
        let mut bps = Vec::new();
        collect(&self.killing, &mut bps);
        bps.sort_by(f64::total_cmp);
        bps.dedup();
        bps
    }

    /// Maturation stages where the killing may lose smoothness.
    pub fn killing_stage_breakpoints(&self) -> Vec<f64> {
        fn collect(k: &Killing, out: &mut Vec<f64>) {
            match k {
                Killing::Profile { delta, .. } => out.push(*delta),
                Killing::Field(f) => out.extend_from_slice(f.stage_breakpoints()),
                Killing::Offset { base, .. } => collect(base, out),
            }
        }
        let mut stages = Vec::new();
        collect(&self.killing, &mut stages);
        stages.retain(|x| (0.0..1.0).contains(x));
        stages.sort_by(f64::total_cmp);
        stages.dedup();
        stages
    }

    /// The killing as a standalone field (for the particle simulators).
    pub fn killing_field(&self) -> KillingField {
        let model = self.clone();
        let bps = self.killing_time_breakpoints();
        let stages = self.killing_stage_breakpoints();
        KillingField::new(move |t, x| model.killing_rate(t, x), bps).with_stage_breakpoints(stages)
    }

    /// Integrated killing along the maturation characteristic of a particle
    /// entering at `entry`: the integral over the lag window of
    /// `g(entry + w, rho * w)`.
    pub fn maturation_hazard(&self, entry: f64) -> Result<f64> {
        self.hazard_of(&self.killing, entry)
    }

    fn hazard_of(&self, killing: &Killing, entry: f64) -> Result<f64> {
        let tau = self.maturation_lag();
        match killing {
            Killing::Profile { gamma, delta, q } => {
                if *gamma == 0.0 || *delta == 0.0 {
                    return Ok(0.0);
                }
                let window = delta * tau;
                match q.exact_integral(entry, entry + window) {
                    Some(v) => Ok(gamma * v),
                    None => {
                        let v = integrate_adaptive(
                            |t| q.value(t),
                            entry,
                            entry + window,
                            q.breakpoints(),
                            self.quad_tol,
                        )?;
                        Ok(gamma * v)
                    }
                }
            }
            Killing::Field(f) => {
                // kinks enter from the field's time structure (shifted to the
                // characteristic) and from its stage structure (scaled by rho)
                let mut bps: Vec<f64> = f
                    .time_breakpoints()
                    .iter()
                    .map(|b| b - entry)
                    .filter(|w| (0.0..tau).contains(w))
                    .collect();
                bps.extend(
                    f.stage_breakpoints()
                        .iter()
                        .map(|x| x / self.rho)
                        .filter(|w| (0.0..tau).contains(w)),
                );
                integrate_adaptive(
                    |w| f.rate(entry + w, (self.rho * w).min(1.0 - 1e-15)),
                    0.0,
                    tau,
                    &bps,
                    self.quad_tol,
                )
            }
            Killing::Offset { base, shift } => Ok(self.hazard_of(base, entry)? + shift * tau),
        }
    }

    /// Probability that a particle entering at `entry` survives maturation:
    /// `exp(-integral of g along the characteristic)`. Lies in `[0, 1]` for
    /// nonnegative killing; may exceed 1 under amplification.
    pub fn survival_probability(&self, entry: f64) -> Result<f64> {
        Ok((-self.maturation_hazard(entry)?).exp())
    }

    /// Integrated post-maturation hazard over `[s, t]`.
    fn mu_integral(&self, s: f64, t: f64) -> Result<f64> {
        match self.mu.exact_integral(s, t) {
            Some(v) => Ok(v),
            None => {
                integrate_adaptive(|w| self.mu.value(w), s, t, self.mu.breakpoints(), self.quad_tol)
            }
        }
    }

    /// Fraction of mature particles alive at `s` that survive to `t`
    /// (the binomial thinning probability of the occupation law).
    pub fn mature_survival(&self, s: f64, t: f64) -> Result<f64> {
        if t < s {
            return Err(Error::InvalidInput(format!("mature_survival needs t >= s, got {s} > {t}")));
        }
        Ok((-self.mu_integral(s, t)?).exp())
    }

    /// Breakpoints for the entry-time integrals on `[s - tau, t - tau]`.
    fn entry_breakpoints(&self, t: f64) -> Vec<f64> {
        let tau = self.maturation_lag();
        let window = match &self.killing {
            Killing::Profile { delta, .. } => delta * tau,
            _ => tau,
        };
        let mut bps: Vec<f64> = self.lambda.breakpoints().to_vec();
        for b in self.killing_time_breakpoints() {
            bps.push(b);
            bps.push(b - window);
        }
        for b in self.mu.breakpoints() {
            bps.push(b - tau);
        }
        let _ = t;
        bps.sort_by(f64::total_cmp);
        bps.dedup();
        bps
    }

    /// Expected number of particles that matured in `(s, t]` and are still
    /// alive at `t` (the Poisson mean of the occupation law): the integral
    /// over entry times of input rate x maturation survival x post-maturation
    /// survival.
    pub fn mature_influx(&self, s: f64, t: f64) -> Result<f64> {
        if t < s {
            return Err(Error::InvalidInput(format!("mature_influx needs t >= s, got {s} > {t}")));
        }
        let tau = self.maturation_lag();
        let lo = (s - tau).max(self.lambda.support_start());
        let hi = t - tau;
        if hi <= lo {
            return Ok(0.0);
        }
        let bps = self.entry_breakpoints(t);
        let mut failure: Option<Error> = None;
        let value = integrate_adaptive(
            |u| {
                let p = match self.maturation_hazard(u) {
                    Ok(h) => (-h).exp(),
                    Err(e) => {
                        failure.get_or_insert(e);
                        return f64::NAN;
                    }
                };
                let alive = match self.mu_integral(u + tau, t) {
                    Ok(h) => (-h).exp(),
                    Err(e) => {
                        failure.get_or_insert(e);
                        return f64::NAN;
                    }
                };
                self.lambda.value(u) * p * alive
            },
            lo,
            hi,
            &bps,
            self.quad_tol,
        );
        match failure {
            Some(e) => Err(e),
            None => value,
        }
    }

    /// Single-quadrature reduction of [`Self::mature_influx`] for cutoff
    /// profiles with constant input and elimination: the inner space-time
    /// integral collapses to the exact drug-exposure primitive.
    pub fn mature_influx_cutoff(&self, s: f64, t: f64) -> Result<f64> {
        if t < s {
            return Err(Error::InvalidInput(format!(
                "mature_influx_cutoff needs t >= s, got {s} > {t}"
            )));
        }
        let (gamma, delta, q) = self.profile().ok_or_else(|| {
            Error::InvalidInput("mature_influx_cutoff requires the cutoff killing profile".into())
        })?;
        let (lambda_start, lambda_level) = self.lambda.step_form().ok_or_else(|| {
            Error::InvalidInput("mature_influx_cutoff requires constant input rate".into())
        })?;
        let mu = self.mu.constant_value().ok_or_else(|| {
            Error::InvalidInput("mature_influx_cutoff requires constant elimination rate".into())
        })?;
        let tau = self.maturation_lag();
        let window = delta * tau;
        let lo = (s - tau).max(lambda_start);
        let hi = t - tau;
        if hi <= lo {
            return Ok(0.0);
        }
        let mut bps: Vec<f64> = Vec::new();
        for b in q.breakpoints() {
            bps.push(*b);
            bps.push(b - window);
        }
        let exposure = |u: f64| -> f64 {
            if gamma == 0.0 || window == 0.0 {
                0.0
            } else {
                gamma * q.exact_integral(u, u + window).expect("profile q carries a primitive")
            }
        };
        let value = integrate_adaptive(
            |u| (-mu * (hi - u) - exposure(u)).exp(),
            lo,
            hi,
            &bps,
            self.quad_tol,
        )?;
        Ok(lambda_level * value)
    }

    /// Conditional mean count `m * alpha(s, t) + beta(s, t)`.
    pub fn mean_count(&self, s: f64, t: f64, m: u64) -> Result<f64> {
        Ok(m as f64 * self.mature_survival(s, t)? + self.mature_influx(s, t)?)
    }

    /// The exact conditional law of the mature count at `t` given `m` at `s`.
    pub fn occupation_law(&self, s: f64, t: f64, m: u64) -> Result<BinomialPoissonLaw> {
        BinomialPoissonLaw::new(m, self.mature_survival(s, t)?, self.mature_influx(s, t)?)
    }

    fn require_stationary_form(&self) -> Result<(f64, f64, f64, f64, f64, &RateSchedule)> {
        let lambda = self.lambda.constant_value().ok_or_else(|| {
            Error::InvalidInput("equilibrium predictor requires constant input rate".into())
        })?;
        let mu = self.mu.constant_value().ok_or_else(|| {
            Error::InvalidInput("equilibrium predictor requires constant elimination rate".into())
        })?;
        if mu <= 0.0 {
            return Err(Error::InvalidInput("equilibrium predictor requires mu > 0".into()));
        }
        let (gamma, delta, q) = self.profile().ok_or_else(|| {
            Error::InvalidInput("equilibrium predictor requires the cutoff killing profile".into())
        })?;
        Ok((lambda, mu, gamma, delta, delta * self.maturation_lag(), q))
    }

    /// Mean count at `t` when the system starts from its drug-free Poisson
    /// equilibrium: the occupation-law mean with the initial count averaged
    /// over `Poisson(lambda/mu)`, evaluated through the explicit
    /// single-integral form with the exact drug-exposure primitive.
    pub fn equilibrium_mean(&self, t: f64) -> Result<f64> {
        if t < 0.0 {
            return Err(Error::InvalidInput(format!("equilibrium_mean needs t >= 0, got {t}")));
        }
        let (lambda, mu, gamma, _delta, window, q) = self.require_stationary_form()?;
        let tau = self.maturation_lag();
        let hi = t - tau;
        let mut bps: Vec<f64> = Vec::new();
        for b in q.breakpoints() {
            bps.push(*b);
            bps.push(b - window);
        }
        let integral = integrate_adaptive(
            |u| {
                let exposure = if gamma == 0.0 || window == 0.0 {
                    0.0
                } else {
                    gamma * q.exact_integral(u, u + window).expect("profile q carries a primitive")
                };
                (mu * (u - hi) - exposure).exp()
            },
            -tau,
            hi,
            &bps,
            self.quad_tol,
        )?;
        Ok(lambda / mu * (-mu * t).exp() + lambda * integral)
    }

    /// [`Self::equilibrium_mean`] on an increasing grid, reusing the
    /// cumulative entry-time integral across the grid points.
    pub fn equilibrium_mean_batch(&self, times: &[f64]) -> Result<Vec<f64>> {
        if times.is_empty() {
            return Ok(Vec::new());
        }
        if times.windows(2).any(|w| w[0] >= w[1]) || times[0] < 0.0 {
            return Err(Error::InvalidInput(
                "equilibrium_mean_batch needs an increasing nonnegative grid".into(),
            ));
        }
        let (lambda, mu, gamma, _delta, window, q) = self.require_stationary_form()?;
        let tau = self.maturation_lag();
        let horizon = times.last().unwrap() - tau;
        if mu * (horizon + tau) > 600.0 {
            return Err(Error::InvalidInput(
                "horizon too long for the cumulative equilibrium integral".into(),
            ));
        }
        let exposure = |u: f64| -> f64 {
            if gamma == 0.0 || window == 0.0 {
                0.0
            } else {
                gamma * q.exact_integral(u, u + window).expect("profile q carries a primitive")
            }
        };
        // Raw integrand e^{mu u - exposure}; each output rescales by e^{-mu (t - tau)}.
        let mut edges: Vec<f64> = Vec::new();
        for b in q.breakpoints() {
            edges.push(*b);
            edges.push(b - window);
        }
        edges.extend(times.iter().map(|&t| t - tau));
        edges.retain(|&u| -tau < u && u <= horizon);
        edges.push(-tau);
        edges.push(horizon);
        edges.sort_by(f64::total_cmp);
        edges.dedup();

        let mut cumulative = Vec::with_capacity(edges.len());
        let mut acc = 0.0;
        cumulative.push(0.0);
        for pair in edges.windows(2) {
            acc += integrate_adaptive(
                |u| (mu * u - exposure(u)).exp(),
                pair[0],
                pair[1],
                &[],
                self.quad_tol,
            )?;
            cumulative.push(acc);
        }
        let out = times
            .iter()
            .map(|&t| {
                let v = t - tau;
                let idx = edges
                    .binary_search_by(|e| e.total_cmp(&v))
                    .expect("grid points are edge members");
                lambda / mu * (-mu * t).exp() + lambda * (-mu * v).exp() * cumulative[idx]
            })
            .collect();
        Ok(out)
    }

    /// Killing with a constant added on all maturation stages; used by the
    /// input-rescaling transform. The caller decides amplification flags.
    pub(crate) fn with_killing_offset(&self, shift: f64) -> Self {
        let mut out = self.clone();
        out.killing = Killing::Offset { base: Box::new(self.killing.clone()), shift };
        out
    }

    /// Replace the input schedule, keeping everything else.
    pub(crate) fn with_lambda(&self, lambda: RateSchedule) -> Self {
        let mut out = self.clone();
        out.lambda = lambda;
        out
    }

    /// Replace the killing with a general field, keeping everything else.
    pub(crate) fn with_killing_field(&self, field: KillingField) -> Self {
        let mut out = self.clone();
        out.killing = Killing::Field(field);
        out
    }

    /// Majorant of the killing rate along the maturation characteristic of a
    /// particle entering at `entry`, over absolute times `[t0, t1]`.
    pub fn killing_sup_along(&self, entry: f64, t0: f64, t1: f64) -> f64 {
        fn sup_of(model: &ContinuousModel, k: &Killing, entry: f64, t0: f64, t1: f64) -> f64 {
            match k {
                Killing::Profile { gamma, delta, q } => {
                    // stage < delta only while t < entry + delta * tau
                    let cutoff = entry + delta * model.maturation_lag();
                    if t0 >= cutoff || *gamma == 0.0 {
                        0.0
                    } else {
                        gamma * q.sup_on(t0, t1.min(cutoff))
                    }
                }
                Killing::Field(f) => {
                    let mut hi: f64 = 0.0;
                    const SAMPLES: usize = 33;
                    for i in 0..=SAMPLES {
                        let t = t0 + (t1 - t0) * i as f64 / SAMPLES as f64;
                        let x = (model.rho * (t - entry)).clamp(0.0, 1.0 - 1e-15);
                        hi = hi.max(f.rate(t, x));
                    }
                    for b in f.time_breakpoints() {
                        if t0 < *b && *b < t1 {
                            let x = (model.rho * (b - entry)).clamp(0.0, 1.0 - 1e-15);
                            hi = hi.max(f.rate(*b, x)).max(f.rate(b - 1e-12, x));
                        }
                    }
                    hi.max(0.0) * 1.05
                }
                Killing::Offset { base, shift } => {
                    (sup_of(model, base, entry, t0, t1) + shift).max(0.0)
                }
            }
        }
        sup_of(self, &self.killing, entry, t0, t1)
    }
}
