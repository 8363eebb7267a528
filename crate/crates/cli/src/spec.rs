//! Model specification file: TOML schema, validation, and assembly into the
//! library's model types. Unknown keys are rejected everywhere.

use serde::Deserialize;

use maturix::fit::{FitOptions, ParamBounds, RateParams};
use maturix::{ContinuousModel, DrugKinetics, ExpSegment, ExpTerm, RateSchedule};

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: Kind,
    /// How `evaluate` computes its curve: from the drug-free equilibrium or
    /// as the transient mean from a fixed initial count.
    #[serde(default)]
    pub predictor: Predictor,
    pub rates: Rates,
    pub killing: Killing,
    #[serde(default)]
    pub kinetics: Kinetics,
    #[serde(default)]
    pub chain: Option<Chain>,
    #[serde(default)]
    pub simulation: Simulation,
    #[serde(default)]
    pub fit: FitSection,
    #[serde(default)]
    pub output: Output,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Continuous,
    Catenary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Predictor {
    #[default]
    Equilibrium,
    Transient,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rates {
    pub lambda: f64,
    pub rho: f64,
    pub mu: f64,
    /// When set, the input rate is zero before this time (production switch-on).
    #[serde(default)]
    pub lambda_support_start: Option<f64>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Killing {
    pub gamma: f64,
    pub delta: f64,
    #[serde(default)]
    pub source: KillingSource,
    #[serde(default)]
    pub pulse: Option<Pulse>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum KillingSource {
    #[default]
    Kinetics,
    Pulse,
}

/// Difference-of-exponentials killing pulse
/// `exp(-slow_rate (t - onset)) - exp(-fast_rate (t - onset))` for `t >= onset`.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pulse {
    pub onset: f64,
    pub slow_rate: f64,
    pub fast_rate: f64,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Kinetics {
    pub a_kin: f64,
    pub b_kin: f64,
    pub n_doses: usize,
    pub dose_interval: f64,
    pub infusion_duration: f64,
}

impl Default for Kinetics {
    fn default() -> Self {
        let k = DrugKinetics::default();
        Self {
            a_kin: k.a_kin,
            b_kin: k.b_kin,
            n_doses: k.n_doses,
            dose_interval: k.dose_interval,
            infusion_duration: k.infusion_duration,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Chain {
    pub n: usize,
    #[serde(default)]
    pub n0: Option<usize>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Simulation {
    pub seed: u64,
    pub replicas: u64,
    pub initial_count: u64,
}

impl Default for Simulation {
    fn default() -> Self {
        Self { seed: 42, replicas: 10_000, initial_count: 0 }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSection {
    pub starts: usize,
    pub max_iters: usize,
    pub polish_restarts: usize,
    /// Parameter bounds span this factor both ways around the spec's rates.
    pub bound_factor: f64,
}

impl Default for FitSection {
    fn default() -> Self {
        let o = FitOptions::default();
        Self {
            starts: o.starts,
            max_iters: o.max_iters,
            polish_restarts: o.polish_restarts,
            bound_factor: 5.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct Output {
    pub path: Option<String>,
}

impl ModelSpec {
    pub fn load(path: &std::path::Path) -> Result<(Self, String), CliError> {
        let raw = std::fs::read(path)
            .map_err(|e| CliError::validation(format!("cannot read {}: {e}", path.display())))?;
        let sha = {
            use sha2::{Digest, Sha256};
            let digest = Sha256::digest(&raw);
            digest.iter().map(|b| format!("{b:02x}")).collect::<String>()
        };
        let text = String::from_utf8(raw)
            .map_err(|e| CliError::validation(format!("{} is not UTF-8: {e}", path.display())))?;
        let spec: ModelSpec = toml::from_str(&text)
            .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
        spec.validate()?;
        Ok((spec, sha))
    }

    fn validate(&self) -> Result<(), CliError> {
        let r = &self.rates;
        if !(r.lambda >= 0.0 && r.rho > 0.0 && r.mu >= 0.0) {
            return Err(CliError::validation(
                "rates must satisfy lambda >= 0, rho > 0, mu >= 0".into(),
            ));
        }
        if !(self.killing.gamma >= 0.0) {
            return Err(CliError::validation("killing.gamma must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.killing.delta) {
            return Err(CliError::validation("killing.delta must lie in [0, 1)".into()));
        }
        if self.killing.source == KillingSource::Pulse && self.killing.pulse.is_none() {
            return Err(CliError::validation(
                "killing.source = \"pulse\" needs a [killing.pulse] table".into(),
            ));
        }
        if self.kind == Kind::Catenary {
            let chain = self
                .chain
                .ok_or_else(|| CliError::validation("catenary spec needs a [chain] table".into()))?;
            if chain.n < 2 {
                return Err(CliError::validation("chain.n must be at least 2".into()));
            }
            if let Some(n0) = chain.n0 {
                if n0 < 1 || n0 > chain.n - 1 {
                    return Err(CliError::validation(format!(
                        "chain.n0 must lie in [1, {}]",
                        chain.n - 1
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn drug_kinetics(&self) -> Result<DrugKinetics, CliError> {
        let k = &self.kinetics;
        DrugKinetics::new(k.a_kin, k.b_kin, k.n_doses, k.dose_interval, k.infusion_duration)
            .map_err(CliError::from_validation)
    }

    /// The killing drive `q(t)`: drug kinetics or the declared pulse.
    pub fn killing_drive(&self) -> Result<RateSchedule, CliError> {
        match self.killing.source {
            KillingSource::Kinetics => Ok(self.drug_kinetics()?.schedule()),
            KillingSource::Pulse => {
                let p = self.killing.pulse.expect("validated");
                if !(p.slow_rate > 0.0 && p.fast_rate > p.slow_rate) {
                    return Err(CliError::validation(
                        "pulse needs 0 < slow_rate < fast_rate".into(),
                    ));
                }
                RateSchedule::piecewise_exp(vec![ExpSegment {
                    start: p.onset,
                    end: f64::INFINITY,
                    terms: vec![
                        ExpTerm { coeff: 1.0, rate: -p.slow_rate, origin: p.onset },
                        ExpTerm { coeff: -1.0, rate: -p.fast_rate, origin: p.onset },
                    ],
                }])
                .map_err(CliError::from_validation)
            }
        }
    }

    pub fn input_schedule(&self) -> RateSchedule {
        match self.rates.lambda_support_start {
            Some(start) => RateSchedule::step(start, self.rates.lambda),
            None => RateSchedule::constant(self.rates.lambda),
        }
    }

    pub fn continuous_model(&self) -> Result<ContinuousModel, CliError> {
        ContinuousModel::with_profile(
            self.rates.rho,
            self.input_schedule(),
            RateSchedule::constant(self.rates.mu),
            self.killing.gamma,
            self.killing.delta,
            self.killing_drive()?,
        )
        .map_err(CliError::from_validation)
    }

    pub fn rate_params(&self) -> RateParams {
        RateParams {
            lambda: self.rates.lambda,
            rho: self.rates.rho,
            mu: self.rates.mu,
            gamma: self.killing.gamma,
        }
    }

    pub fn bounds(&self) -> ParamBounds {
        ParamBounds::around(&self.rate_params(), self.killing.delta, self.fit.bound_factor)
    }

    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            starts: self.fit.starts,
            max_iters: self.fit.max_iters,
            polish_restarts: self.fit.polish_restarts,
            ..FitOptions::default()
        }
    }
}
