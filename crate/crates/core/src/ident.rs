//! Structural non-identifiability of the (input, killing) pair.
//!
//! The occupation law depends on the input intensity and the
//! during-maturation killing only through the compound effective input rate
//! `lambda(t) * p(t)`. The transforms here rewrite a model into an
//! observationally equivalent one: scaling the input against a constant
//! killing offset, normalizing the input to one, or shifting part of the
//! killing into the input.

use crate::error::{Error, Result};
use crate::model::{ContinuousModel, KillingField};
use crate::schedule::RateSchedule;

/// Compound input rate `lambda(t) * p(t)`: the intensity of the thinned
/// point process of surviving entrants, which fully determines the law.
pub fn effective_input_rate(model: &ContinuousModel, t: f64) -> Result<f64> {
    Ok(model.lambda().value(t) * model.survival_probability(t)?)
}

/// Scale the input by `theta > 0` and add `rho * ln(theta)` to the killing.
///
/// The effective input rate is unchanged, so the transformed model is
/// indistinguishable from the original. For `theta < 1` the killing offset
/// is negative and the result carries the amplification flag.
pub fn scale_input(model: &ContinuousModel, theta: f64) -> Result<ContinuousModel> {
    if !(theta > 0.0) {
        return Err(Error::InvalidInput(format!("theta must be > 0, got {theta}")));
    }
    let shift = model.rho() * theta.ln();
    let out = model
        .with_killing_offset(shift)
        .with_lambda(model.lambda().clone().scaled(theta));
    Ok(if theta < 1.0 || model.amplification_allowed() { out.allow_amplification() } else { out })
}

/// Rewrite the model with unit input: the input variation moves into the
/// killing as `G(v, y) = g(v, y) - rho * ln(lambda(v - y / rho))`.
///
/// Requires a strictly positive input wherever the formula samples it; a
/// nonpositive value surfaces as a non-finite integrand downstream.
pub fn normalize_unit_input(model: &ContinuousModel) -> Result<ContinuousModel> {
    if let Some(c) = model.lambda().constant_value() {
        if c <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "normalize_unit_input needs lambda > 0, got constant {c}"
            )));
        }
    }
    let rho = model.rho();
    let lambda = model.lambda().clone();
    let base = model.clone();
    let mut bps = model.killing_time_breakpoints();
    bps.extend_from_slice(lambda.breakpoints());
    let stages = model.killing_stage_breakpoints();
    let field = KillingField::new(
        move |v, y| base.killing_rate(v, y) - rho * lambda.value(v - y / rho).ln(),
        bps,
    )
    .with_stage_breakpoints(stages);
    Ok(model
        .with_killing_field(field)
        .with_lambda(RateSchedule::constant(1.0))
        .allow_amplification())
}

/// Split the killing as `g = g1 + g2` and absorb `g1` into the input:
/// the result keeps killing `g - g1` and input `lambda(t) * p_{g1}(t)`.
///
/// `g1` must satisfy `0 <= g1 <= g` pointwise (checked by sampling on the
/// declared breakpoint range).
pub fn split_killing(model: &ContinuousModel, g1: &KillingField) -> Result<ContinuousModel> {
    let tau = model.maturation_lag();
    let mut bps = model.killing_time_breakpoints();
    bps.extend_from_slice(g1.time_breakpoints());
    let (lo, hi) = match (bps.first(), bps.last()) {
        (Some(a), Some(b)) => (a - tau, b + tau),
        _ => (-tau, tau),
    };
    for i in 0..=128 {
        let t = lo + (hi - lo) * i as f64 / 128.0;
        for j in 0..8 {
            let x = j as f64 / 8.0;
            let v1 = g1.rate(t, x);
            let v = model.killing_rate(t, x);
            if v1 < -1e-12 || v1 > v + 1e-9 {
                return Err(Error::InvalidInput(format!(
                    "split component outside [0, g] at (t={t}, x={x}): {v1} vs {v}"
                )));
            }
        }
    }

    // Residual killing g - g1.
    let base = model.clone();
    let g1_rem = g1.clone();
    let mut field_bps = model.killing_time_breakpoints();
    field_bps.extend_from_slice(g1.time_breakpoints());
    let mut field_stages = model.killing_stage_breakpoints();
    field_stages.extend_from_slice(g1.stage_breakpoints());
    let residual = KillingField::new(
        move |t, x| (base.killing_rate(t, x) - g1_rem.rate(t, x)).max(0.0),
        field_bps,
    )
    .with_stage_breakpoints(field_stages);

    // Input thinned by the survival of the split-off part: a helper model
    // carrying g1 alone supplies its maturation hazard.
    let helper = model.with_killing_field(g1.clone());
    let lambda = model.lambda().clone();
    let mut lam_bps: Vec<f64> = lambda.breakpoints().to_vec();
    for b in g1.time_breakpoints() {
        lam_bps.push(*b);
        lam_bps.push(b - tau);
    }
    let support = lambda.support_start();
    let thinned = RateSchedule::custom(
        move |t| {
            let hazard = helper.maturation_hazard(t).unwrap_or(f64::NAN);
            lambda.value(t) * (-hazard).exp()
        },
        lam_bps,
        support,
    );
    Ok(model.with_killing_field(residual).with_lambda(thinned))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinetics::DrugKinetics;

    fn base_model() -> ContinuousModel {
        ContinuousModel::with_profile(
            0.5,
            RateSchedule::constant(2.0),
            RateSchedule::constant(0.7),
            0.4,
            0.5,
            DrugKinetics::default().schedule(),
        )
        .unwrap()
        .with_quad_tol(1e-11)
    }

    #[test]
    fn effective_rate_reduces_to_lambda_without_killing() {
        let m = ContinuousModel::with_profile(
            1.0,
            RateSchedule::constant(3.0),
            RateSchedule::zero(),
            0.0,
            0.0,
            RateSchedule::zero(),
        )
        .unwrap();
        assert_eq!(effective_input_rate(&m, 5.0).unwrap(), 3.0);
        let silent = m.with_lambda(RateSchedule::zero());
        assert_eq!(effective_input_rate(&silent, 5.0).unwrap(), 0.0);
    }

    #[test]
    fn theta_one_is_identity() {
        let m = base_model();
        let t1 = scale_input(&m, 1.0).unwrap();
        for t in [0.0, 5.0, 25.0] {
            assert!(
                (effective_input_rate(&m, t).unwrap() - effective_input_rate(&t1, t).unwrap())
                    .abs()
                    < 1e-12
            );
        }
    }

    #[test]
    fn theta_cancellation_exact_case() {
        // lambda = 1, g = 0, rho = 1, theta = 2: transformed effective rate is
        // 2 * e^{-ln 2} = 1.
        let m = ContinuousModel::with_profile(
            1.0,
            RateSchedule::constant(1.0),
            RateSchedule::zero(),
            0.0,
            0.0,
            RateSchedule::zero(),
        )
        .unwrap();
        let t2 = scale_input(&m, 2.0).unwrap();
        for t in [0.0, 1.0, 9.0] {
            assert!((effective_input_rate(&t2, t).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn scale_input_preserves_effective_rate() {
        let m = base_model();
        let transformed = scale_input(&m, 3.0).unwrap();
        for i in 0..20 {
            let t = -2.0 + i as f64 * 5.3;
            let a = effective_input_rate(&m, t).unwrap();
            let b = effective_input_rate(&transformed, t).unwrap();
            assert!((a - b).abs() < 1e-9 * a.max(1.0), "t={t}: {a} vs {b}");
        }
    }

    #[test]
    fn theta_below_one_sets_amplification() {
        let m = base_model();
        let t = scale_input(&m, 0.5).unwrap();
        assert!(t.amplification_allowed());
        for u in [0.0, 24.5] {
            let a = effective_input_rate(&m, u).unwrap();
            let b = effective_input_rate(&t, u).unwrap();
            assert!((a - b).abs() < 1e-9 * a.max(1.0));
        }
    }

    #[test]
    fn scale_group_property() {
        let m = base_model();
        let composed = scale_input(&scale_input(&m, 2.0).unwrap(), 3.0).unwrap();
        let direct = scale_input(&m, 6.0).unwrap();
        for t in [0.0, 3.0, 24.2, 60.0] {
            assert!((composed.lambda().value(t) - direct.lambda().value(t)).abs() < 1e-12);
            for x in [0.0, 0.3, 0.7] {
                assert!(
                    (composed.killing_rate(t, x) - direct.killing_rate(t, x)).abs() < 1e-12,
                    "killing mismatch at ({t}, {x})"
                );
            }
        }
    }

    #[test]
    fn unit_input_identity_when_lambda_is_one() {
        let m = base_model().with_lambda(RateSchedule::constant(1.0));
        let n = normalize_unit_input(&m).unwrap();
        for t in [0.0, 11.0, 30.0] {
            for x in [0.0, 0.4, 0.9] {
                assert!((n.killing_rate(t, x) - m.killing_rate(t, x)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn unit_input_inverts_constant_scaling() {
        // lambda = theta, g = 0: G = -rho ln(theta), effective rate theta p = lambda_g
        let theta = 4.0;
        let m = ContinuousModel::with_profile(
            1.0,
            RateSchedule::constant(theta),
            RateSchedule::zero(),
            0.0,
            0.0,
            RateSchedule::zero(),
        )
        .unwrap();
        let n = normalize_unit_input(&m).unwrap();
        assert_eq!(n.lambda().constant_value(), Some(1.0));
        for t in [0.0, 2.0] {
            assert!((n.killing_rate(t, 0.5) + theta.ln()).abs() < 1e-12);
            let a = effective_input_rate(&m, t).unwrap();
            let b = effective_input_rate(&n, t).unwrap();
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn unit_input_preserves_law_parameters() {
        let m = base_model();
        let n = normalize_unit_input(&m).unwrap();
        for (s, t) in [(0.0, 6.0), (2.0, 30.0), (20.0, 49.0)] {
            let alpha_m = m.mature_survival(s, t).unwrap();
            let alpha_n = n.mature_survival(s, t).unwrap();
            assert_eq!(alpha_m, alpha_n);
            let beta_m = m.mature_influx(s, t).unwrap();
            let beta_n = n.mature_influx(s, t).unwrap();
            assert!(
                (beta_m - beta_n).abs() < 1e-8 * beta_m.max(1.0),
                "({s}, {t}): {beta_m} vs {beta_n}"
            );
        }
    }

    #[test]
    fn unit_input_rejects_nonpositive_constant_lambda() {
        let m = base_model().with_lambda(RateSchedule::constant(0.0));
        assert!(normalize_unit_input(&m).is_err());
    }

    #[test]
    fn split_zero_is_identity() {
        let m = base_model();
        let s = split_killing(&m, &KillingField::constant(0.0)).unwrap();
        for t in [0.0, 24.3] {
            let a = effective_input_rate(&m, t).unwrap();
            let b = effective_input_rate(&s, t).unwrap();
            assert!((a - b).abs() < 1e-9 * a.max(1.0));
        }
    }

    #[test]
    fn split_everything_moves_killing_into_input() {
        let m = base_model();
        let s = split_killing(&m, &m.killing_field()).unwrap();
        // residual killing vanishes
        for t in [0.0, 24.2, 70.0] {
            for x in [0.0, 0.45, 0.9] {
                assert!(s.killing_rate(t, x).abs() < 1e-12);
            }
        }
        // input equals the effective input rate of the original
        for t in [0.0, 24.2, 70.0] {
            let expect = effective_input_rate(&m, t).unwrap();
            assert!((s.lambda().value(t) - expect).abs() < 1e-10);
        }
    }

    #[test]
    fn split_preserves_influx() {
        let m = base_model();
        let half = KillingField::new(
            {
                let base = m.clone();
                move |t, x| 0.5 * base.killing_rate(t, x)
            },
            m.killing_time_breakpoints(),
        )
        .with_stage_breakpoints(m.killing_stage_breakpoints());
        let s = split_killing(&m, &half).unwrap();
        for (a, b) in [(0.0, 8.0), (5.0, 40.0)] {
            let beta_m = m.mature_influx(a, b).unwrap();
            let beta_s = s.mature_influx(a, b).unwrap();
            assert!(
                (beta_m - beta_s).abs() < 1e-8 * beta_m.max(1.0),
                "({a}, {b}): {beta_m} vs {beta_s}"
            );
        }
    }

    #[test]
    fn split_rejects_excess_component() {
        let m = base_model();
        let too_big = KillingField::new(
            {
                let base = m.clone();
                move |t, x| base.killing_rate(t, x) + 0.5
            },
            m.killing_time_breakpoints(),
        );
        assert!(split_killing(&m, &too_big).is_err());
    }
}
