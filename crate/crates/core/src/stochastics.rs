//! Arrival and delay laws, binary entropy, exact moments, and a truncated
//! series evaluator with a certified tail bound.
//!
//! The series evaluator never uses any closed form: it sums `f(k)·pmf(k)`
//! term by term and stops only once a geometric envelope proves the
//! remaining tail is below the requested tolerance. Every closed-form
//! moment in this crate is checked against it.

use thiserror::Error;

/// Hard cap on the number of terms summed by [`series_oracle`].
pub const SERIES_TERM_CAP: u64 = 10_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StochasticsError {
    #[error("probability {value} outside {range}")]
    InvalidProbability { value: f64, range: &'static str },
    #[error("series tail not certified below {tol:e} within {cap} terms")]
    Uncertified { tol: f64, cap: u64 },
    #[error("invalid envelope: {0}")]
    InvalidEnvelope(&'static str),
}

fn check_open_closed(value: f64) -> Result<f64, StochasticsError> {
    if value > 0.0 && value <= 1.0 {
        Ok(value)
    } else {
        Err(StochasticsError::InvalidProbability {
            value,
            range: "(0, 1]",
        })
    }
}

/// Per-slot Bernoulli energy arrivals with probability `q`.
///
/// The inter-arrival time τ measured from the previous update is geometric
/// on {1, 2, ...}: `P[τ = k] = q (1-q)^(k-1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrivalModel {
    q: f64,
}

impl ArrivalModel {
    pub fn new(q: f64) -> Result<Self, StochasticsError> {
        Ok(Self {
            q: check_open_closed(q)?,
        })
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn pmf(&self, k: u64) -> f64 {
        if k == 0 {
            return 0.0;
        }
        if self.q == 1.0 {
            return if k == 1 { 1.0 } else { 0.0 };
        }
        self.q * (1.0 - self.q).powf((k - 1) as f64)
    }

    /// `P[τ > k] = (1-q)^k`.
    pub fn survival(&self, k: u64) -> f64 {
        (1.0 - self.q).powf(k as f64)
    }

    /// `(E[τ], E[τ²]) = (1/q, (2-q)/q²)`.
    pub fn tau_moments(&self) -> TauMoments {
        let q = self.q;
        TauMoments {
            mean: 1.0 / q,
            second_moment: (2.0 - q) / (q * q),
        }
    }

    /// Smallest `k` with `P[τ > k] < tail`; at least 1.
    pub fn truncation_point(&self, tail: f64) -> u64 {
        if self.q == 1.0 {
            return 1;
        }
        let k = (tail.ln() / (1.0 - self.q).ln()).ceil();
        (k as u64).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauMoments {
    pub mean: f64,
    pub second_moment: f64,
}

/// Information delay V, geometric on {0, 1, 2, ...}: `P[V = v] = p (1-p)^v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeomDelay {
    p: f64,
}

impl GeomDelay {
    pub fn new(p: f64) -> Result<Self, StochasticsError> {
        Ok(Self {
            p: check_open_closed(p)?,
        })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn pmf(&self, v: u64) -> f64 {
        if self.p == 1.0 {
            return if v == 0 { 1.0 } else { 0.0 };
        }
        self.p * (1.0 - self.p).powf(v as f64)
    }

    /// `(E[V], E[V²], H(V))` with the entropy in bits, `H(V) = H₂(p)/p`.
    pub fn moments(&self) -> DelayMoments {
        let p = self.p;
        if p == 1.0 {
            return DelayMoments {
                mean: 0.0,
                second_moment: 0.0,
                entropy_bits: 0.0,
            };
        }
        DelayMoments {
            mean: (1.0 - p) / p,
            second_moment: (2.0 - 3.0 * p + p * p) / (p * p),
            entropy_bits: h2(p) / p,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayMoments {
    pub mean: f64,
    pub second_moment: f64,
    pub entropy_bits: f64,
}

/// Binary entropy in bits, with `0·log 0 = 0`.
pub fn binary_entropy(p: f64) -> Result<f64, StochasticsError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(StochasticsError::InvalidProbability {
            value: p,
            range: "[0, 1]",
        });
    }
    Ok(h2(p))
}

/// Unchecked binary entropy for callers that already hold a valid probability.
pub(crate) fn h2(p: f64) -> f64 {
    xlog2x(p) + xlog2x(1.0 - p)
}

/// `-x log₂ x` with the continuous extension at 0.
pub(crate) fn xlog2x(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        -x * x.log2()
    }
}

/// A law on the nonnegative integers with a geometric envelope:
/// `pmf(k+1) ≤ decay · pmf(k)` for every `k ≥ start`, and `pmf(k) = 0` below `start`.
pub trait DiscreteLaw {
    fn start(&self) -> u64;
    fn pmf(&self, k: u64) -> f64;
    fn decay(&self) -> f64;
}

impl DiscreteLaw for ArrivalModel {
    fn start(&self) -> u64 {
        1
    }
    fn pmf(&self, k: u64) -> f64 {
        ArrivalModel::pmf(self, k)
    }
    fn decay(&self) -> f64 {
        1.0 - self.q
    }
}

impl DiscreteLaw for GeomDelay {
    fn start(&self) -> u64 {
        0
    }
    fn pmf(&self, k: u64) -> f64 {
        GeomDelay::pmf(self, k)
    }
    fn decay(&self) -> f64 {
        1.0 - self.p
    }
}

/// Polynomial growth bound on the integrand: `|f(k)| ≤ scale · (1+k)^degree`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Growth {
    pub degree: u32,
    pub scale: f64,
}

impl Growth {
    pub const fn poly(degree: u32) -> Self {
        Self { degree, scale: 1.0 }
    }

    pub const fn scaled(degree: u32, scale: f64) -> Self {
        Self { degree, scale }
    }
}

/// Computes `Σ_k f(k)·pmf(k)`, stopping once the certified tail bound is
/// below `tol`.
///
/// The tail after index `k` is bounded by
/// `scale·(k+2)^d·pmf(k+1) / (1 - decay·((k+3)/(k+2))^d)` whenever the
/// denominator is positive.
pub fn series_oracle<L, F>(law: &L, f: F, growth: Growth, tol: f64) -> Result<f64, StochasticsError>
where
    L: DiscreteLaw + ?Sized,
    F: Fn(u64) -> f64,
{
    let decay = law.decay();
    if !(0.0..1.0).contains(&decay) {
        return Err(StochasticsError::InvalidEnvelope("decay must lie in [0, 1)"));
    }
    if !(growth.scale >= 0.0) || !(tol > 0.0) {
        return Err(StochasticsError::InvalidEnvelope("scale and tol must be positive"));
    }
    let degree = growth.degree as i32;
    let mut acc = NeumaierSum::default();
    let start = law.start();
    let mut k = start;
    loop {
        let w = law.pmf(k);
        if w > 0.0 {
            acc.add(f(k) * w);
        }
        let next = law.pmf(k + 1);
        if next == 0.0 {
            return Ok(acc.total());
        }
        let kf = k as f64;
        let sigma = decay * ((kf + 3.0) / (kf + 2.0)).powi(degree);
        if sigma < 1.0 {
            let bound = growth.scale * (kf + 2.0).powi(degree) * next / (1.0 - sigma);
            if bound < tol {
                return Ok(acc.total());
            }
        }
        k += 1;
        if k - start >= SERIES_TERM_CAP {
            return Err(StochasticsError::Uncertified {
                tol,
                cap: SERIES_TERM_CAP,
            });
        }
    }
}

/// Compensated summation.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn binary_entropy_values() {
        assert_eq!(binary_entropy(0.5).unwrap(), 1.0);
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
        // mpmath at 30 digits: 0.499915958164527995640...
        assert!((binary_entropy(0.11).unwrap() - 0.499_915_958_164_528).abs() < 1e-12);
        assert!(binary_entropy(-0.1).is_err());
        assert!(binary_entropy(1.5).is_err());
        assert!(binary_entropy(f64::NAN).is_err());
    }

    #[test]
    fn tau_moment_examples() {
        let m = ArrivalModel::new(1.0).unwrap().tau_moments();
        assert_eq!((m.mean, m.second_moment), (1.0, 1.0));
        let m = ArrivalModel::new(0.5).unwrap().tau_moments();
        assert_eq!((m.mean, m.second_moment), (2.0, 6.0));
        let model = ArrivalModel::new(0.2).unwrap();
        let m = model.tau_moments();
        let oracle = series_oracle(&model, |k| (k * k) as f64, Growth::poly(2), 1e-12).unwrap();
        assert!((oracle - 45.0).abs() < 1e-9);
        assert!((m.mean - 5.0).abs() < 1e-12 && (m.second_moment - 45.0).abs() < 1e-12);
    }

    #[test]
    fn v_moment_examples() {
        let m = GeomDelay::new(1.0).unwrap().moments();
        assert_eq!((m.mean, m.second_moment, m.entropy_bits), (0.0, 0.0, 0.0));

        let d = GeomDelay::new(0.5).unwrap();
        let m = d.moments();
        assert_eq!((m.mean, m.second_moment, m.entropy_bits), (1.0, 3.0, 2.0));
        let ev = series_oracle(&d, |v| v as f64, Growth::poly(1), 1e-13).unwrap();
        let ev2 = series_oracle(&d, |v| (v * v) as f64, Growth::poly(2), 1e-13).unwrap();
        assert!((ev - 1.0).abs() < 1e-12 && (ev2 - 3.0).abs() < 1e-12);

        let m = GeomDelay::new(0.25).unwrap().moments();
        assert!((m.mean - 3.0).abs() < 1e-12);
        assert!((m.second_moment - 21.0).abs() < 1e-12);
        assert!((m.entropy_bits - 3.245_112_497_836_531).abs() < 1e-12);
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(ArrivalModel::new(0.0).is_err());
        assert!(ArrivalModel::new(1.01).is_err());
        assert!(GeomDelay::new(0.0).is_err());
        assert!(GeomDelay::new(f64::NAN).is_err());
    }

    #[test]
    fn series_oracle_examples() {
        let model = ArrivalModel::new(0.5).unwrap();
        let mean = series_oracle(&model, |k| k as f64, Growth::poly(1), 1e-12).unwrap();
        assert!((mean - 2.0).abs() < 1e-12);
        let second = series_oracle(&model, |k| (k * k) as f64, Growth::poly(2), 1e-12).unwrap();
        assert!((second - 6.0).abs() < 1e-11);
        let first_only = series_oracle(
            &model,
            |k| if k <= 1 { k as f64 } else { 0.0 },
            Growth::poly(1),
            1e-12,
        )
        .unwrap();
        assert!((first_only - 0.5).abs() < 1e-12);
    }

    #[test]
    fn series_oracle_degenerate_law_terminates() {
        let model = ArrivalModel::new(1.0).unwrap();
        let s = series_oracle(&model, |k| (k * k) as f64, Growth::poly(2), 1e-15).unwrap();
        assert_eq!(s, 1.0);
    }

    #[test]
    fn series_oracle_reports_uncertified_tail() {
        // A decay this close to 1 needs far more than the cap to push the tail below 1e-300.
        let slow = ArrivalModel::new(1e-9).unwrap();
        let err = series_oracle(&slow, |k| k as f64, Growth::poly(1), 1e-300).unwrap_err();
        assert!(matches!(err, StochasticsError::Uncertified { .. }));
    }

    #[test]
    fn pmfs_sum_to_one() {
        for &q in &[0.05, 0.2, 0.5, 0.9, 1.0] {
            let model = ArrivalModel::new(q).unwrap();
            let total = series_oracle(&model, |_| 1.0, Growth::poly(0), 1e-14).unwrap();
            assert!((total - 1.0).abs() < 1e-12, "q={q}: {total}");
        }
        for &p in &[0.05, 0.3, 1.0] {
            let d = GeomDelay::new(p).unwrap();
            let total = series_oracle(&d, |_| 1.0, Growth::poly(0), 1e-14).unwrap();
            assert!((total - 1.0).abs() < 1e-12, "p={p}: {total}");
        }
    }

    #[test]
    fn truncation_point_bounds_tail() {
        for &q in &[0.2, 0.5, 0.7] {
            let model = ArrivalModel::new(q).unwrap();
            let k = model.truncation_point(1e-10);
            assert!(model.survival(k) < 1e-10);
            assert!(model.survival(k - 1) >= 1e-10);
        }
        assert_eq!(ArrivalModel::new(1.0).unwrap().truncation_point(1e-10), 1);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn closed_forms_match_series(q in 0.02f64..=1.0, p in 0.02f64..=1.0) {
            let model = ArrivalModel::new(q).unwrap();
            let tm = model.tau_moments();
            let m1 = series_oracle(&model, |k| k as f64, Growth::poly(1), 1e-13).unwrap();
            let m2 = series_oracle(&model, |k| (k * k) as f64, Growth::poly(2), 1e-13).unwrap();
            prop_assert!((tm.mean - m1).abs() <= 1e-9 * tm.mean);
            prop_assert!((tm.second_moment - m2).abs() <= 1e-9 * tm.second_moment);

            let d = GeomDelay::new(p).unwrap();
            let dm = d.moments();
            let v1 = series_oracle(&d, |v| v as f64, Growth::poly(1), 1e-13).unwrap();
            let v2 = series_oracle(&d, |v| (v * v) as f64, Growth::poly(2), 1e-13).unwrap();
            let logs = (p.log2().abs() + (1.0 - p).log2().abs()).max(1.0);
            let h = series_oracle(
                &d,
                |v| { let w = d.pmf(v); if w > 0.0 { -w.log2() } else { 0.0 } },
                Growth::scaled(1, logs),
                1e-13,
            ).unwrap();
            prop_assert!((dm.mean - v1).abs() <= 1e-9 * dm.mean.max(1.0));
            prop_assert!((dm.second_moment - v2).abs() <= 1e-9 * dm.second_moment.max(1.0));
            prop_assert!((dm.entropy_bits - h).abs() <= 1e-9 * dm.entropy_bits.max(1.0));
        }

        #[test]
        fn series_monotone_in_tol(q in 0.05f64..1.0, e in 3i32..12) {
            let model = ArrivalModel::new(q).unwrap();
            let loose_tol = 10f64.powi(-e);
            let loose = series_oracle(&model, |k| (k * k) as f64, Growth::poly(2), loose_tol).unwrap();
            let tight = series_oracle(&model, |k| (k * k) as f64, Growth::poly(2), loose_tol / 10.0).unwrap();
            prop_assert!((tight - loose).abs() <= loose_tol);
        }
    }
}
