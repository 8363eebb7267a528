//! The Binomial-Poisson convolution law of the mature count, plus
//! goodness-of-fit utilities for validating simulators against it.

use statrs::function::gamma::{gamma_ur, ln_gamma};

use crate::error::{Error, Result};

/// Law of `X + Y` with `X ~ Binomial(m, p)` and `Y ~ Poisson(lambda)`
/// independent: surviving initial particles plus newly matured arrivals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinomialPoissonLaw {
    pub m: u64,
    pub p: f64,
    pub lambda: f64,
}

impl BinomialPoissonLaw {
    pub fn new(m: u64, p: f64, lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidInput(format!("survival probability {p} outside [0, 1]")));
        }
        if !(lambda >= 0.0) {
            return Err(Error::InvalidInput(format!("Poisson mean {lambda} must be >= 0")));
        }
        Ok(Self { m, p, lambda })
    }

    /// Probability of observing exactly `k` particles, computed as the
    /// convolution sum in log space.
    pub fn pmf(&self, k: u64) -> f64 {
        let m = self.m;
        let p = self.p;
        let lam = self.lambda;
        let mut total = 0.0;
        let j_hi = m.min(k);
        for j in 0..=j_hi {
            let binom_ln = if p == 0.0 {
                if j == 0 {
                    0.0
                } else {
                    continue;
                }
            } else if p == 1.0 {
                if j == m {
                    0.0
                } else {
                    continue;
                }
            } else {
                ln_choose(m, j) + j as f64 * p.ln() + (m - j) as f64 * (1.0 - p).ln()
            };
            let r = k - j;
            let pois_ln = if lam == 0.0 {
                if r == 0 {
                    0.0
                } else {
                    continue;
                }
            } else {
                -lam + r as f64 * lam.ln() - ln_gamma(r as f64 + 1.0)
            };
            total += (binom_ln + pois_ln).exp();
        }
        total
    }

    pub fn mean(&self) -> f64 {
        self.m as f64 * self.p + self.lambda
    }

    pub fn variance(&self) -> f64 {
        self.m as f64 * self.p * (1.0 - self.p) + self.lambda
    }

    /// Count beyond which the remaining tail mass is below `1e-12`.
    pub fn tail_bound(&self) -> u64 {
        let bound = self.m as f64 + self.lambda + 12.0 * (self.lambda + 1.0).sqrt() + 20.0;
        bound.ceil() as u64
    }

    /// `pmf(0..=tail_bound)` as a vector.
    pub fn pmf_vector(&self) -> Vec<f64> {
        (0..=self.tail_bound()).map(|k| self.pmf(k)).collect()
    }
}

fn ln_choose(n: u64, k: u64) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// Total variation distance between two pmf vectors. Bins beyond the shared
/// length are folded, together with any unassigned mass, into one final
/// virtual bin each, so truncated and complete vectors compare correctly.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    let shared = p.len().min(q.len());
    let mut acc = 0.0;
    let (mut p_mass, mut q_mass) = (0.0, 0.0);
    for i in 0..shared {
        acc += (p[i] - q[i]).abs();
        p_mass += p[i];
        q_mass += q[i];
    }
    let tail_p = (1.0 - p_mass).max(0.0);
    let tail_q = (1.0 - q_mass).max(0.0);
    0.5 * (acc + (tail_p - tail_q).abs())
}

/// Pearson chi-square goodness-of-fit of integer samples against a law.
///
/// Bins with expected count below 5 are merged upward from the tail; returns
/// the statistic and the survival-function p-value.
pub fn chi_square_gof(samples: &[u64], law: &BinomialPoissonLaw) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("chi-square samples"));
    }
    let n = samples.len() as f64;
    let bound = law.tail_bound() as usize;
    let mut observed = vec![0.0f64; bound + 2];
    for &s in samples {
        let idx = (s as usize).min(bound + 1);
        observed[idx] += 1.0;
    }
    let mut expected: Vec<f64> = (0..=bound).map(|k| n * law.pmf(k as u64)).collect();
    let tail = (n - expected.iter().sum::<f64>()).max(0.0);
    expected.push(tail);

    // Merge adjacent cells until every expected count reaches 5.
    let mut merged_obs = Vec::new();
    let mut merged_exp = Vec::new();
    let (mut acc_o, mut acc_e) = (0.0, 0.0);
    for (o, e) in observed.iter().zip(expected.iter()) {
        acc_o += o;
        acc_e += e;
        if acc_e >= 5.0 {
            merged_obs.push(acc_o);
            merged_exp.push(acc_e);
            acc_o = 0.0;
            acc_e = 0.0;
        }
    }
    if acc_e > 0.0 || acc_o > 0.0 {
        match merged_exp.last_mut() {
            Some(last) => {
                *last += acc_e;
                *merged_obs.last_mut().unwrap() += acc_o;
            }
            None => return Err(Error::InvalidInput("all bins degenerate in chi-square".into())),
        }
    }
    if merged_exp.len() < 2 {
        return Err(Error::InvalidInput("fewer than two usable chi-square bins".into()));
    }
    let statistic: f64 = merged_obs
        .iter()
        .zip(merged_exp.iter())
        .map(|(o, e)| (o - e) * (o - e) / e)
        .sum();
    let dof = (merged_exp.len() - 1) as f64;
    let p_value = chi_square_sf(statistic, dof);
    Ok((statistic, p_value))
}

/// Survival function of the chi-square distribution with `dof` degrees of
/// freedom (upper regularized incomplete gamma).
pub fn chi_square_sf(statistic: f64, dof: f64) -> f64 {
    if statistic <= 0.0 {
        return 1.0;
    }
    gamma_ur(dof / 2.0, statistic / 2.0)
}

/// Poisson CDF `P(X <= k)` through the upper regularized incomplete gamma.
pub fn poisson_cdf(mean: f64, k: u64) -> f64 {
    if mean == 0.0 {
        return 1.0;
    }
    gamma_ur(k as f64 + 1.0, mean)
}
