//! Piecewise-smooth scalar rate functions of time.
//!
//! A [`RateSchedule`] is defined for all real `t`, smooth between its declared
//! breakpoints, and carries an exact antiderivative for every built-in kind.
//! It plays every scalar-rate role in the toolkit: production, transfer and
//! elimination rates, killing pulses and drug concentration profiles.

use std::sync::Arc;

use crate::error::{Error, Result};

/// One exponential term `coeff * exp(rate * (t - origin))`.
///
/// `rate = 0` encodes a constant contribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpTerm {
    pub coeff: f64,
    pub rate: f64,
    pub origin: f64,
}

impl ExpTerm {
    pub fn constant(c: f64) -> Self {
        Self { coeff: c, rate: 0.0, origin: 0.0 }
    }

    fn value(&self, t: f64) -> f64 {
        if self.rate == 0.0 {
            self.coeff
        } else {
            self.coeff * (self.rate * (t - self.origin)).exp()
        }
    }

    /// Exact integral over `[a, b]`.
    fn integral(&self, a: f64, b: f64) -> f64 {
        if self.rate == 0.0 {
            self.coeff * (b - a)
        } else {
            self.coeff / self.rate
                * ((self.rate * (b - self.origin)).exp() - (self.rate * (a - self.origin)).exp())
        }
    }
}

/// A half-open span `[start, end)` on which a sum of exponential terms is active.
#[derive(Debug, Clone)]
pub struct ExpSegment {
    pub start: f64,
    /// Exclusive end; `f64::INFINITY` for an unbounded tail segment.
    pub end: f64,
    pub terms: Vec<ExpTerm>,
}

impl ExpSegment {
    fn value(&self, t: f64) -> f64 {
        self.terms.iter().map(|term| term.value(t)).sum()
    }

    fn integral(&self, a: f64, b: f64) -> f64 {
        self.terms.iter().map(|term| term.integral(a, b)).sum()
    }
}

#[derive(Clone)]
enum Kind {
    /// Constant value on all of the real line.
    Constant(f64),
    /// Zero before `start`, constant `value` afterwards.
    Step { start: f64, value: f64 },
    /// Zero outside the union of segments; sum of exponential terms inside.
    PiecewiseExp(Vec<ExpSegment>),
    /// Linear interpolation of a sampled table; zero outside its time range.
    Tabulated { times: Vec<f64>, values: Vec<f64> },
    /// Pointwise sum of other schedules.
    Sum(Vec<RateSchedule>),
    /// Inner schedule scaled by a constant factor.
    Scaled { factor: f64, inner: Box<RateSchedule> },
    /// Arbitrary user function; no exact antiderivative available.
    Custom {
        f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        breakpoints: Vec<f64>,
        support_start: f64,
    },
}

impl std::fmt::Debug for Kind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Kind::Constant(c) => write!(f, "Constant({c})"),
            Kind::Step { start, value } => write!(f, "Step {{ start: {start}, value: {value} }}"),
            Kind::PiecewiseExp(segs) => write!(f, "PiecewiseExp({} segments)", segs.len()),
            Kind::Tabulated { times, .. } => write!(f, "Tabulated({} points)", times.len()),
            Kind::Sum(parts) => write!(f, "Sum({} parts)", parts.len()),
            Kind::Scaled { factor, inner } => write!(f, "Scaled({factor} x {inner:?})"),
            Kind::Custom { breakpoints, .. } => {
                write!(f, "Custom({} breakpoints)", breakpoints.len())
            }
        }
    }
}

/// A piecewise-smooth, everywhere-defined scalar function of time.
#[derive(Debug, Clone)]
pub struct RateSchedule {
    kind: Kind,
    breakpoints: Vec<f64>,
}

impl RateSchedule {
    pub fn constant(value: f64) -> Self {
        Self { kind: Kind::Constant(value), breakpoints: Vec::new() }
    }

    /// `value * 1_{[start, inf)}(t)`.
    pub fn step(start: f64, value: f64) -> Self {
        Self { kind: Kind::Step { start, value }, breakpoints: vec![start] }
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    /// Piecewise sum-of-exponentials. Segments must be sorted, non-overlapping
    /// and non-empty.
    pub fn piecewise_exp(segments: Vec<ExpSegment>) -> Result<Self> {
        for pair in segments.windows(2) {
            if pair[0].end > pair[1].start {
                return Err(Error::InvalidInput(format!(
                    "overlapping segments: [{}, {}) and [{}, {})",
                    pair[0].start, pair[0].end, pair[1].start, pair[1].end
                )));
            }
        }
        for seg in &segments {
            if !(seg.start < seg.end) {
                return Err(Error::InvalidInput(format!(
                    "empty segment [{}, {})",
                    seg.start, seg.end
                )));
            }
        }
        let mut breakpoints = Vec::new();
        for seg in &segments {
            breakpoints.push(seg.start);
            if seg.end.is_finite() {
                breakpoints.push(seg.end);
            }
        }
        breakpoints.sort_by(f64::total_cmp);
        breakpoints.dedup();
        Ok(Self { kind: Kind::PiecewiseExp(segments), breakpoints })
    }

    /// Piecewise-constant schedule from `(start, value)` pairs; the last value
    /// extends to infinity. Starts must be strictly increasing.
    pub fn piecewise_constant(pieces: &[(f64, f64)]) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::EmptyInput("piecewise_constant pieces"));
        }
        let mut segments = Vec::with_capacity(pieces.len());
        for (i, &(start, value)) in pieces.iter().enumerate() {
            let end = pieces.get(i + 1).map_or(f64::INFINITY, |p| p.0);
            segments.push(ExpSegment { start, end, terms: vec![ExpTerm::constant(value)] });
        }
        Self::piecewise_exp(segments)
    }

    /// Linear interpolation of `(times, values)`; zero outside the table range.
    pub fn tabulated(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::DimensionMismatch { expected: times.len(), got: values.len() });
        }
        if times.len() < 2 {
            return Err(Error::InvalidInput("tabulated schedule needs at least 2 points".into()));
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput("tabulated times must be strictly increasing".into()));
        }
        let breakpoints = times.clone();
        Ok(Self { kind: Kind::Tabulated { times, values }, breakpoints })
    }

    pub fn sum(parts: Vec<RateSchedule>) -> Self {
        let mut breakpoints: Vec<f64> =
            parts.iter().flat_map(|p| p.breakpoints.iter().copied()).collect();
        breakpoints.sort_by(f64::total_cmp);
        breakpoints.dedup();
        Self { kind: Kind::Sum(parts), breakpoints }
    }

    pub fn scaled(self, factor: f64) -> Self {
        let breakpoints = self.breakpoints.clone();
        Self { kind: Kind::Scaled { factor, inner: Box::new(self) }, breakpoints }
    }

    /// Schedule backed by an arbitrary function. No exact antiderivative;
    /// integrals of it fall back to quadrature.
    pub fn custom(
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        mut breakpoints: Vec<f64>,
        support_start: f64,
    ) -> Self {
        breakpoints.sort_by(f64::total_cmp);
        breakpoints.dedup();
        Self {
            kind: Kind::Custom { f: Arc::new(f), breakpoints: breakpoints.clone(), support_start },
            breakpoints,
        }
    }

    /// Value at `t`; defined for every real `t`.
    pub fn value(&self, t: f64) -> f64 {
        match &self.kind {
            Kind::Constant(c) => *c,
            Kind::Step { start, value } => {
                if t >= *start {
                    *value
                } else {
                    0.0
                }
            }
            Kind::PiecewiseExp(segments) => segments
                .iter()
                .find(|seg| seg.start <= t && t < seg.end)
                .map_or(0.0, |seg| seg.value(t)),
            Kind::Tabulated { times, values } => {
                if t < times[0] || t > *times.last().unwrap() {
                    return 0.0;
                }
                let idx = match times.binary_search_by(|x| x.total_cmp(&t)) {
                    Ok(i) => return values[i],
                    Err(i) => i - 1,
                };
                let frac = (t - times[idx]) / (times[idx + 1] - times[idx]);
                values[idx] + frac * (values[idx + 1] - values[idx])
            }
            Kind::Sum(parts) => parts.iter().map(|p| p.value(t)).sum(),
            Kind::Scaled { factor, inner } => factor * inner.value(t),
            Kind::Custom { f, .. } => f(t),
        }
    }

    /// Sorted times where smoothness may fail.
    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    /// Earliest time before which the value is identically zero
    /// (`-inf` when the schedule never vanishes on the left).
    pub fn support_start(&self) -> f64 {
        match &self.kind {
            Kind::Constant(c) => {
                if *c == 0.0 {
                    f64::INFINITY
                } else {
                    f64::NEG_INFINITY
                }
            }
            Kind::Step { start, .. } => *start,
            Kind::PiecewiseExp(segments) => {
                segments.first().map_or(f64::INFINITY, |s| s.start)
            }
            Kind::Tabulated { times, .. } => times[0],
            Kind::Sum(parts) => parts
                .iter()
                .map(|p| p.support_start())
                .fold(f64::INFINITY, f64::min),
            Kind::Scaled { inner, .. } => inner.support_start(),
            Kind::Custom { support_start, .. } => *support_start,
        }
    }

    /// Exact integral over `[a, b]`, when the kind admits one.
    ///
    /// `None` means the caller must integrate numerically.
    pub fn exact_integral(&self, a: f64, b: f64) -> Option<f64> {
        if a == b {
            return Some(0.0);
        }
        if b < a {
            return self.exact_integral(b, a).map(|v| -v);
        }
        match &self.kind {
            Kind::Constant(c) => Some(c * (b - a)),
            Kind::Step { start, value } => {
                let lo = a.max(*start);
                Some(if b > lo { value * (b - lo) } else { 0.0 })
            }
            Kind::PiecewiseExp(segments) => {
                let mut total = 0.0;
                for seg in segments {
                    let lo = a.max(seg.start);
                    let hi = b.min(seg.end);
                    if hi > lo {
                        total += seg.integral(lo, hi);
                    }
                }
                Some(total)
            }
            Kind::Tabulated { times, values } => {
                // Exact integral of the piecewise-linear interpolant.
                let mut total = 0.0;
                for i in 0..times.len() - 1 {
                    let (t0, t1) = (times[i], times[i + 1]);
                    let lo = a.max(t0);
                    let hi = b.min(t1);
                    if hi > lo {
                        let slope = (values[i + 1] - values[i]) / (t1 - t0);
                        let v_lo = values[i] + slope * (lo - t0);
                        let v_hi = values[i] + slope * (hi - t0);
                        total += 0.5 * (v_lo + v_hi) * (hi - lo);
                    }
                }
                Some(total)
            }
            Kind::Sum(parts) => {
                let mut total = 0.0;
                for p in parts {
                    total += p.exact_integral(a, b)?;
                }
                Some(total)
            }
            Kind::Scaled { factor, inner } => Some(factor * inner.exact_integral(a, b)?),
            Kind::Custom { .. } => None,
        }
    }

    /// Upper bound for the value on `[a, b]`.
    ///
    /// Exact for constant and step kinds. Otherwise the maximum over a dense
    /// sample (segment/breakpoint endpoints plus interior points) inflated by
    /// a 5% safety factor, an approximation adequate for the piecewise-smooth
    /// rates this crate works with.
    pub fn sup_on(&self, a: f64, b: f64) -> f64 {
        match &self.kind {
            Kind::Constant(c) => c.max(0.0),
            Kind::Step { start, value } => {
                if b >= *start {
                    value.max(0.0)
                } else {
                    0.0
                }
            }
            Kind::Scaled { factor, inner } if *factor >= 0.0 => factor * inner.sup_on(a, b),
            Kind::Sum(parts) => parts.iter().map(|p| p.sup_on(a, b)).sum(),
            _ => {
                let mut hi = self.value(a).max(self.value(b));
                for &bp in &self.breakpoints {
                    if a < bp && bp < b {
                        hi = hi.max(self.value(bp)).max(self.value(bp - 1e-12 * (1.0 + bp.abs())));
                    }
                }
                const SAMPLES: usize = 33;
                for i in 1..SAMPLES {
                    let t = a + (b - a) * i as f64 / SAMPLES as f64;
                    hi = hi.max(self.value(t));
                }
                hi.max(0.0) * 1.05
            }
        }
    }

    /// The constant value when the schedule is constant on all of the real
    /// line (recognizing scaled and summed constants).
    pub fn constant_value(&self) -> Option<f64> {
        match &self.kind {
            Kind::Constant(c) => Some(*c),
            Kind::Scaled { factor, inner } => inner.constant_value().map(|v| factor * v),
            Kind::Sum(parts) => {
                let mut acc = 0.0;
                for p in parts {
                    acc += p.constant_value()?;
                }
                Some(acc)
            }
            _ => None,
        }
    }

    /// `(support_start, level)` when the schedule is a constant level from
    /// some start time on (constant schedules report a start of `-inf`).
    pub fn step_form(&self) -> Option<(f64, f64)> {
        match &self.kind {
            Kind::Constant(c) => Some((f64::NEG_INFINITY, *c)),
            Kind::Step { start, value } => Some((*start, *value)),
            Kind::Scaled { factor, inner } => {
                inner.step_form().map(|(s, v)| (s, factor * v))
            }
            _ => None,
        }
    }

    /// Heuristic nonnegativity check: exact for constant/step/tabulated kinds,
    /// sampled for the rest.
    pub fn is_nonnegative(&self) -> bool {
        match &self.kind {
            Kind::Constant(c) => *c >= 0.0,
            Kind::Step { value, .. } => *value >= 0.0,
            Kind::Tabulated { values, .. } => values.iter().all(|v| *v >= 0.0),
            Kind::Sum(parts) => parts.iter().all(|p| p.is_nonnegative()),
            Kind::Scaled { factor, inner } => {
                (*factor >= 0.0 && inner.is_nonnegative()) || *factor == 0.0
            }
            Kind::PiecewiseExp(segments) => segments.iter().all(|seg| {
                let span = if seg.end.is_finite() { seg.end - seg.start } else { 10.0 };
                (0..=32).all(|i| {
                    let t = seg.start + span * i as f64 / 32.0;
                    seg.value(t.min(seg.end)) >= -1e-12
                })
            }),
            Kind::Custom { f, breakpoints, support_start } => {
                let lo = if support_start.is_finite() { *support_start } else { 0.0 };
                let hi = breakpoints.last().copied().unwrap_or(lo + 1.0).max(lo + 1.0);
                (0..=64).all(|i| f(lo + (hi - lo) * i as f64 / 64.0) >= -1e-12)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pulse() -> RateSchedule {
        // e^{-(t-10)/10} - e^{-(t-10)/2} for t >= 10
        RateSchedule::piecewise_exp(vec![ExpSegment {
            start: 10.0,
            end: f64::INFINITY,
            terms: vec![
                ExpTerm { coeff: 1.0, rate: -0.1, origin: 10.0 },
                ExpTerm { coeff: -1.0, rate: -0.5, origin: 10.0 },
            ],
        }])
        .unwrap()
    }

    #[test]
    fn constant_basics() {
        let s = RateSchedule::constant(2.5);
        assert_eq!(s.value(-100.0), 2.5);
        assert_eq!(s.value(3.0), 2.5);
        assert_eq!(s.exact_integral(0.0, 4.0), Some(10.0));
        assert_eq!(s.support_start(), f64::NEG_INFINITY);
    }

    #[test]
    fn step_is_zero_before_start() {
        let s = RateSchedule::step(0.0, 1.0);
        assert_eq!(s.value(-1e-9), 0.0);
        assert_eq!(s.value(0.0), 1.0);
        assert_eq!(s.exact_integral(-5.0, 3.0), Some(3.0));
        assert_eq!(s.support_start(), 0.0);
    }

    #[test]
    fn pulse_values_and_support() {
        let s = pulse();
        assert_eq!(s.value(9.999), 0.0);
        assert!((s.value(10.0) - 0.0).abs() < 1e-12);
        let peak_t = 10.0 + (0.5f64 / 0.1).ln() / 0.4;
        assert!(s.value(peak_t) > s.value(peak_t - 1.0));
        assert!(s.value(peak_t) > s.value(peak_t + 1.0));
        assert_eq!(s.support_start(), 10.0);
    }

    #[test]
    fn piecewise_constant_integral() {
        // mu = 1 on [0,1), 2 on [1, inf): int_0^2 = 3
        let s = RateSchedule::piecewise_constant(&[(0.0, 1.0), (1.0, 2.0)]).unwrap();
        assert!((s.exact_integral(0.0, 2.0).unwrap() - 3.0).abs() < 1e-15);
        assert_eq!(s.value(0.5), 1.0);
        assert_eq!(s.value(1.5), 2.0);
    }

    #[test]
    fn tabulated_interpolates() {
        let s = RateSchedule::tabulated(vec![0.0, 1.0, 2.0], vec![0.0, 2.0, 0.0]).unwrap();
        assert_eq!(s.value(0.5), 1.0);
        assert_eq!(s.value(1.5), 1.0);
        assert_eq!(s.value(3.0), 0.0);
        // triangle area
        assert!((s.exact_integral(-1.0, 5.0).unwrap() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn overlapping_segments_rejected() {
        let segs = vec![
            ExpSegment { start: 0.0, end: 2.0, terms: vec![ExpTerm::constant(1.0)] },
            ExpSegment { start: 1.0, end: 3.0, terms: vec![ExpTerm::constant(1.0)] },
        ];
        assert!(RateSchedule::piecewise_exp(segs).is_err());
    }

    #[test]
    fn sup_bounds_value() {
        let s = pulse();
        let sup = s.sup_on(10.0, 30.0);
        for i in 0..=400 {
            let t = 10.0 + 20.0 * i as f64 / 400.0;
            assert!(s.value(t) <= sup + 1e-12);
        }
    }

    #[test]
    fn custom_has_no_exact_integral() {
        let s = RateSchedule::custom(|t| t.sin().abs(), vec![0.0], 0.0);
        assert!(s.exact_integral(0.0, 1.0).is_none());
        assert!((s.value(1.0) - 1.0f64.sin()).abs() < 1e-15);
    }

    // Antiderivative consistency: d/dt of the exact integral matches the value
    // away from breakpoints (finite differences, 1e-6 relative).
    fn check_primitive(s: &RateSchedule, ts: &[f64]) {
        let h = 1e-6;
        for &t in ts {
            if s.breakpoints().iter().any(|b| (b - t).abs() < 10.0 * h) {
                continue;
            }
            let fd = (s.exact_integral(0.0, t + h).unwrap() - s.exact_integral(0.0, t - h).unwrap())
                / (2.0 * h);
            let v = s.value(t);
            let scale = v.abs().max(1e-3);
            assert!(
                (fd - v).abs() <= 1e-6 * scale,
                "primitive mismatch at t={t}: fd={fd}, value={v}"
            );
        }
    }

    #[test]
    fn primitive_matches_value() {
        let ts: Vec<f64> = (0..200).map(|i| -5.0 + 0.2 * i as f64).collect();
        check_primitive(&RateSchedule::constant(1.7), &ts);
        check_primitive(&RateSchedule::step(2.0, 0.8), &ts);
        check_primitive(&pulse(), &ts);
        check_primitive(
            &RateSchedule::piecewise_constant(&[(0.0, 1.0), (1.0, 2.0)]).unwrap(),
            &ts,
        );
        check_primitive(
            &RateSchedule::sum(vec![pulse(), RateSchedule::constant(0.3)]).scaled(2.0),
            &ts,
        );
    }

    proptest! {
        #[test]
        fn integral_additive(a in -10.0..10.0f64, b in -10.0..10.0f64, c in -10.0..10.0f64) {
            let s = pulse();
            let whole = s.exact_integral(a, c).unwrap();
            let split = s.exact_integral(a, b).unwrap() + s.exact_integral(b, c).unwrap();
            prop_assert!((whole - split).abs() < 1e-10);
        }

        #[test]
        fn sum_value_is_pointwise_sum(t in -20.0..40.0f64) {
            let s1 = pulse();
            let s2 = RateSchedule::step(0.0, 2.0);
            let both = RateSchedule::sum(vec![s1.clone(), s2.clone()]);
            prop_assert!((both.value(t) - (s1.value(t) + s2.value(t))).abs() < 1e-12);
        }
    }
}
