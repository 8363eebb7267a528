//! Multi-dose intravenous infusion kinetics.
//!
//! Each dose rises as `1 - exp(-a_kin (t - start))` during the infusion and
//! decays as `(1 - exp(-a_kin * dur)) * exp(-b_kin (t - start - dur))`
//! afterwards, so the concentration is continuous at every infusion end.
//! The profile has an exact primitive, which the killing integrals exploit.

use crate::error::{Error, Result};
use crate::schedule::{ExpSegment, ExpTerm, RateSchedule};

/// Infusion-and-decay drug concentration profile.
///
/// `a_kin`/`b_kin` are the kinetic rise and decay constants (named to avoid
/// clashing with the survival-law parameters of the occupation law).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrugKinetics {
    pub a_kin: f64,
    pub b_kin: f64,
    pub n_doses: usize,
    pub dose_interval: f64,
    pub infusion_duration: f64,
}

impl Default for DrugKinetics {
    fn default() -> Self {
        Self { a_kin: 1.86, b_kin: 0.51, n_doses: 5, dose_interval: 24.0, infusion_duration: 0.5 }
    }
}

impl DrugKinetics {
    pub fn new(
        a_kin: f64,
        b_kin: f64,
        n_doses: usize,
        dose_interval: f64,
        infusion_duration: f64,
    ) -> Result<Self> {
        if !(a_kin > 0.0 && b_kin > 0.0 && dose_interval > 0.0 && infusion_duration > 0.0) {
            return Err(Error::InvalidInput("kinetic constants must be positive".into()));
        }
        if n_doses == 0 {
            return Err(Error::InvalidInput("n_doses must be at least 1".into()));
        }
        if infusion_duration >= dose_interval {
            return Err(Error::InvalidInput(
                "infusion_duration must be shorter than dose_interval".into(),
            ));
        }
        Ok(Self { a_kin, b_kin, n_doses, dose_interval, infusion_duration })
    }

    fn peak(&self) -> f64 {
        1.0 - (-self.a_kin * self.infusion_duration).exp()
    }

    /// Concentration at `t`; zero for `t < 0`.
    pub fn concentration(&self, t: f64) -> f64 {
        let mut total = 0.0;
        for d in 0..self.n_doses {
            let start = d as f64 * self.dose_interval;
            let end = start + self.infusion_duration;
            if t >= start && t < end {
                total += 1.0 - (-self.a_kin * (t - start)).exp();
            } else if t >= end {
                total += self.peak() * (-self.b_kin * (t - end)).exp();
            }
        }
        total
    }

    /// Exact antiderivative of the concentration with value 0 at `t = 0`.
    pub fn concentration_primitive(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let mut total = 0.0;
        for d in 0..self.n_doses {
            let start = d as f64 * self.dose_interval;
            if t <= start {
                continue;
            }
            let end = start + self.infusion_duration;
            let te = t.min(end);
            total += (te - start) - (1.0 - (-self.a_kin * (te - start)).exp()) / self.a_kin;
            if t > end {
                total += self.peak() * (1.0 - (-self.b_kin * (t - end)).exp()) / self.b_kin;
            }
        }
        total
    }

    /// Dose start and infusion-end times.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut bps = Vec::with_capacity(2 * self.n_doses);
        for d in 0..self.n_doses {
            let start = d as f64 * self.dose_interval;
            bps.push(start);
            bps.push(start + self.infusion_duration);
        }
        bps
    }

    /// The same profile as a [`RateSchedule`] (piecewise sum of exponentials),
    /// sharing its exact primitive with the generic machinery.
    pub fn schedule(&self) -> RateSchedule {
        let mut edges = self.breakpoints();
        edges.sort_by(f64::total_cmp);
        edges.dedup();
        let mut segments = Vec::new();
        for (i, &lo) in edges.iter().enumerate() {
            let hi = edges.get(i + 1).copied().unwrap_or(f64::INFINITY);
            let mut terms = Vec::new();
            for d in 0..self.n_doses {
                let start = d as f64 * self.dose_interval;
                let end = start + self.infusion_duration;
                if start <= lo && hi <= end {
                    // infusion phase of dose d covers this span
                    terms.push(ExpTerm::constant(1.0));
                    terms.push(ExpTerm { coeff: -1.0, rate: -self.a_kin, origin: start });
                } else if end <= lo {
                    terms.push(ExpTerm { coeff: self.peak(), rate: -self.b_kin, origin: end });
                }
            }
            if !terms.is_empty() {
                segments.push(ExpSegment { start: lo, end: hi, terms });
            }
        }
        RateSchedule::piecewise_exp(segments).expect("segments are sorted and disjoint")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_before_first_dose() {
        let kin = DrugKinetics::default();
        assert_eq!(kin.concentration(-0.001), 0.0);
        assert_eq!(kin.concentration(-100.0), 0.0);
    }

    #[test]
    fn end_of_first_infusion_value() {
        let kin = DrugKinetics::default();
        // 1 - e^{-1.86 * 0.5}
        let expected = 0.605_446_289_628_398_9;
        assert!((kin.concentration(0.5) - expected).abs() < 1e-15);
    }

    #[test]
    fn second_dose_peak_stacks_on_decayed_first() {
        let kin = DrugKinetics::default();
        // peak * (1 + e^{-0.51 * 24})
        let expected = 0.605_449_215_876_625_7;
        assert!((kin.concentration(24.5) - expected).abs() < 1e-15);
    }

    #[test]
    fn continuous_at_infusion_end() {
        let kin = DrugKinetics::default();
        for d in 0..kin.n_doses {
            let end = d as f64 * kin.dose_interval + kin.infusion_duration;
            let left = kin.concentration(end - 1e-9);
            let right = kin.concentration(end + 1e-9);
            assert!((left - right).abs() < 1e-7, "jump at infusion end {end}");
        }
    }

    #[test]
    fn primitive_anchored_at_zero_and_first_window() {
        let kin = DrugKinetics::default();
        assert_eq!(kin.concentration_primitive(0.0), 0.0);
        assert_eq!(kin.concentration_primitive(-3.0), 0.0);
        // int_0^{0.5} q = 0.5 - (1 - e^{-0.93}) / 1.86
        let expected = 0.174_491_242_135_269_42;
        assert!((kin.concentration_primitive(0.5) - expected).abs() < 1e-15);
    }

    #[test]
    fn primitive_matches_quadrature_over_full_course() {
        let kin = DrugKinetics::default();
        let oracle = crate::quad::integrate_adaptive(
            |t| kin.concentration(t),
            0.0,
            120.0,
            &kin.breakpoints(),
            1e-10,
        )
        .unwrap();
        assert!((kin.concentration_primitive(120.0) - oracle).abs() < 1e-9);
    }

    #[test]
    fn primitive_derivative_matches_concentration() {
        let kin = DrugKinetics::default();
        let h = 1e-6;
        for i in 0..200 {
            let t = 0.05 + i as f64 * 0.61;
            if kin.breakpoints().iter().any(|b| (b - t).abs() < 10.0 * h) {
                continue;
            }
            let fd =
                (kin.concentration_primitive(t + h) - kin.concentration_primitive(t - h)) / (2.0 * h);
            let v = kin.concentration(t);
            assert!((fd - v).abs() < 1e-6 * v.abs().max(1e-3), "at t={t}: {fd} vs {v}");
        }
    }

    #[test]
    fn schedule_agrees_with_direct_formula() {
        let kin = DrugKinetics::default();
        let s = kin.schedule();
        for i in 0..2000 {
            let t = -1.0 + i as f64 * 0.07;
            let a = s.value(t);
            let b = kin.concentration(t);
            assert!((a - b).abs() < 1e-12, "schedule {a} vs formula {b} at t={t}");
        }
        // exact integrals agree too
        for &(lo, hi) in &[(0.0, 0.5), (-5.0, 30.0), (10.0, 120.0)] {
            let a = s.exact_integral(lo, hi).unwrap();
            let b = kin.concentration_primitive(hi) - kin.concentration_primitive(lo);
            assert!((a - b).abs() < 1e-11, "integral mismatch on [{lo}, {hi}]");
        }
    }

    #[test]
    fn rejects_degenerate_parameters() {
        assert!(DrugKinetics::new(0.0, 0.5, 5, 24.0, 0.5).is_err());
        assert!(DrugKinetics::new(1.0, 0.5, 0, 24.0, 0.5).is_err());
        assert!(DrugKinetics::new(1.0, 0.5, 5, 24.0, 24.0).is_err());
    }
}
