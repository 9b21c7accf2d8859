//! Independent cross-checks of the closed-form evaluators: a series oracle
//! that recomputes every constituent expectation term by term, Monte Carlo
//! agreement of analytic moments, and the reduction identities.

use rand_chacha::ChaCha12Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;
use thiserror::Error;

use crate::etatp::{ConditionalPmf, EtatpError, Truncation};
use crate::policies::{cycle_moments, evaluate, CycleMoments, PolicyError, PolicyKind, PolicyParams};
use crate::simulator::{simulate, SimError, SimReport};
use crate::stochastics::{series_oracle, ArrivalModel, GeomDelay, Growth, StochasticsError};

/// Absolute tail tolerance used for every oracle series.
pub const ORACLE_TOL: f64 = 1e-15;

#[derive(Debug, Error)]
pub enum ValidationError {
    #[error(transparent)]
    Stochastics(#[from] StochasticsError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Etatp(#[from] EtatpError),
    #[error("the series oracle covers closed-form policies only")]
    Unsupported,
}

struct DelaySeries {
    mean: f64,
    second: f64,
    entropy_bits: f64,
}

fn delay_series(p: f64) -> Result<DelaySeries, ValidationError> {
    let law = GeomDelay::new(p)?;
    let mean = series_oracle(&law, |v| v as f64, Growth::poly(1), ORACLE_TOL)?;
    let second = series_oracle(&law, |v| (v * v) as f64, Growth::poly(2), ORACLE_TOL)?;
    // -log2 pmf(v) = -log2 p - v·log2(1-p)
    let (a, b) = (-p.log2(), -(1.0 - p).log2());
    let entropy_bits = if p == 1.0 {
        0.0
    } else {
        series_oracle(&law, |v| -law.pmf(v).log2(), Growth::scaled(1, a.max(b)), ORACLE_TOL)?
    };
    Ok(DelaySeries {
        mean,
        second,
        entropy_bits,
    })
}

fn tau_series<F: Fn(u64) -> f64>(model: &ArrivalModel, f: F, growth: Growth) -> Result<f64, ValidationError> {
    Ok(series_oracle(model, f, growth, ORACLE_TOL)?)
}

/// Cycle moments of a closed-form policy recomputed from truncated series,
/// without any of the closed forms.
pub fn oracle_moments(model: &ArrivalModel, params: &PolicyParams) -> Result<CycleMoments, ValidationError> {
    params.validate()?;
    let mean_tau = tau_series(model, |k| k as f64, Growth::poly(1))?;
    let second_tau = tau_series(model, |k| (k * k) as f64, Growth::poly(2))?;
    let separable = |ez: f64, ez2: f64, p: f64| -> Result<CycleMoments, ValidationError> {
        let d = delay_series(p)?;
        Ok(CycleMoments {
            mean_tau,
            mean_z: ez,
            second_z: ez2,
            mean_v: d.mean,
            second_v: d.second,
            cross_tau_v: mean_tau * d.mean,
            mean_t: ez + d.mean,
            second_t: ez2 + 2.0 * ez * d.mean + d.second,
            entropy_bits: d.entropy_bits,
        })
    };
    match params {
        PolicyParams::ZeroWait { p } => separable(mean_tau, second_tau, *p),
        PolicyParams::Threshold { tau0, p } => {
            let t0 = *tau0;
            let s = (t0 + 1) as f64;
            let ez = tau_series(model, |k| k.max(t0) as f64, Growth::scaled(1, s))?;
            let ez2 = tau_series(model, |k| (k.max(t0) * k.max(t0)) as f64, Growth::scaled(2, s * s))?;
            separable(ez, ez2, *p)
        }
        PolicyParams::SimplifiedEtatp { c, p_low, p_high } => {
            let c = *c;
            let w_low = tau_series(model, |k| if k <= c { 1.0 } else { 0.0 }, Growth::poly(0))?;
            let w_high = tau_series(model, |k| if k > c { 1.0 } else { 0.0 }, Growth::poly(0))?;
            let k_low = tau_series(model, |k| if k <= c { k as f64 } else { 0.0 }, Growth::poly(1))?;
            let k_high = tau_series(model, |k| if k > c { k as f64 } else { 0.0 }, Growth::poly(1))?;
            let lo = delay_series(*p_low)?;
            let hi = delay_series(*p_high)?;
            let mean_v = w_low * lo.mean + w_high * hi.mean;
            let second_v = w_low * lo.second + w_high * hi.second;
            let cross = k_low * lo.mean + k_high * hi.mean;
            Ok(CycleMoments {
                mean_tau,
                mean_z: mean_tau,
                second_z: second_tau,
                mean_v,
                second_v,
                cross_tau_v: cross,
                mean_t: mean_tau + mean_v,
                second_t: second_tau + second_v + 2.0 * cross,
                entropy_bits: w_low * lo.entropy_bits + w_high * hi.entropy_bits,
            })
        }
        PolicyParams::GeneralEtatp { .. } => Err(ValidationError::Unsupported),
    }
}

/// `(rate, aoi)` from [`oracle_moments`].
pub fn oracle_point(model: &ArrivalModel, params: &PolicyParams) -> Result<(f64, f64), ValidationError> {
    let m = oracle_moments(model, params)?;
    Ok((m.rate(), m.aoi()))
}

fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

/// Deterministic parameter draws for the validation suites.
pub struct ParamSampler(ChaCha12Rng);

impl ParamSampler {
    pub fn new(seed: u64) -> Self {
        Self(ChaCha12Rng::seed_from_u64(seed))
    }

    /// Uniform on `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    pub fn integer(&mut self, hi_inclusive: u64) -> u64 {
        self.0.next_u64() % (hi_inclusive + 1)
    }

    /// A random model and parameter set of the given family.
    pub fn draw(&mut self, kind: PolicyKind) -> (ArrivalModel, PolicyParams) {
        let q_lo = if kind == PolicyKind::GeneralEtatp { 0.2 } else { 0.05 };
        let q = self.uniform(q_lo, 1.0);
        let model = ArrivalModel::new(q).expect("q in range");
        let params = match kind {
            PolicyKind::ZeroWait => PolicyParams::ZeroWait {
                p: self.uniform(0.05, 1.0),
            },
            PolicyKind::Threshold => PolicyParams::Threshold {
                tau0: self.integer(20),
                p: self.uniform(0.05, 1.0),
            },
            PolicyKind::SimplifiedEtatp => PolicyParams::SimplifiedEtatp {
                c: self.integer(20),
                p_low: self.uniform(0.05, 1.0),
                p_high: self.uniform(0.05, 1.0),
            },
            PolicyKind::GeneralEtatp => {
                let tau_max = model.truncation_point(1e-12);
                let v_max = 1 + self.integer(4);
                let width = v_max as usize + 1;
                let mut rows = Vec::with_capacity(tau_max as usize * width);
                for _ in 0..tau_max {
                    let raw: Vec<f64> = (0..width).map(|_| self.unit().powi(2) + 1e-3).collect();
                    let s: f64 = raw.iter().sum();
                    rows.extend(raw.iter().map(|x| x / s));
                }
                let pmf = ConditionalPmf::new(&model, Truncation::new(tau_max, v_max), rows).expect("rows normalized");
                PolicyParams::GeneralEtatp { pmf }
            }
        };
        (model, params)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FormulaCheck {
    pub kind: PolicyKind,
    pub draws: usize,
    pub max_rel_rate: f64,
    pub max_rel_aoi: f64,
    pub tolerance: f64,
}

impl FormulaCheck {
    pub fn passed(&self) -> bool {
        self.max_rel_rate <= self.tolerance && self.max_rel_aoi <= self.tolerance
    }
}

/// Closed form against series oracle for `draws` random parameter sets.
pub fn formula_suite(kind: PolicyKind, draws: usize, seed: u64, tolerance: f64) -> Result<FormulaCheck, ValidationError> {
    let mut sampler = ParamSampler::new(seed);
    let cases: Vec<_> = (0..draws).map(|_| sampler.draw(kind)).collect();
    let errs: Vec<(f64, f64)> = cases
        .par_iter()
        .map(|(model, params)| {
            let pt = evaluate(model, params)?;
            let (rate, aoi) = oracle_point(model, params)?;
            Ok((rel_err(pt.rate, rate), rel_err(pt.aoi, aoi)))
        })
        .collect::<Result<_, ValidationError>>()?;
    Ok(FormulaCheck {
        kind,
        draws,
        max_rel_rate: errs.iter().map(|e| e.0).fold(0.0, f64::max),
        max_rel_aoi: errs.iter().map(|e| e.1).fold(0.0, f64::max),
        tolerance,
    })
}

/// Standardized deviations `(analytic - estimate) / se` of every moment the
/// simulator reports, labelled.
///
/// A sample with no spread reports a zero standard error. For the first
/// moments the standard error implied by the analytic variance is used in
/// that case; other moments must then match exactly.
pub fn moment_z_scores(analytic: &CycleMoments, report: &SimReport) -> Vec<(&'static str, f64)> {
    let se = &report.se;
    let n = report.n_cycles as f64;
    let null_se = |second: f64, mean: f64| ((second - mean * mean).max(0.0) / n).sqrt();
    let q = report.q;
    let rows = [
        ("aoi", analytic.aoi(), report.aoi_hat, se.aoi, 0.0),
        (
            "mean_t",
            analytic.mean_t,
            report.mean_t_hat,
            se.mean_t,
            null_se(analytic.second_t, analytic.mean_t),
        ),
        ("second_t", analytic.second_t, report.second_t_hat, se.second_t, 0.0),
        (
            "mean_v",
            analytic.mean_v,
            report.mean_v_hat,
            se.mean_v,
            null_se(analytic.second_v, analytic.mean_v),
        ),
        ("second_v", analytic.second_v, report.second_v_hat, se.second_v, 0.0),
        ("cross_tau_v", analytic.cross_tau_v, report.cross_tau_v_hat, se.cross_tau_v, 0.0),
        (
            "mean_z",
            analytic.mean_z,
            report.mean_z_hat,
            se.mean_z,
            null_se(analytic.second_z, analytic.mean_z),
        ),
        (
            "mean_tau",
            analytic.mean_tau,
            report.mean_tau_hat,
            se.mean_tau,
            ((1.0 - q) / (q * q * n)).sqrt(),
        ),
    ];
    rows.iter()
        .map(|&(name, a, est, s, fallback)| {
            let d = a - est;
            let s = if s > 0.0 { s } else { fallback };
            let z = if s > 0.0 {
                d / s
            } else if d.abs() <= 1e-12 * a.abs().max(1.0) {
                0.0
            } else {
                f64::INFINITY
            };
            (name, z)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationCheck {
    pub kind: PolicyKind,
    pub draws: usize,
    pub n_cycles: u64,
    /// Draws in which every moment was within `z_limit` standard errors.
    pub agreeing: usize,
    pub z_limit: f64,
    /// Largest `|z|` seen in each draw.
    pub worst_z: Vec<f64>,
}

impl SimulationCheck {
    /// At least 19 of every 20 draws agree.
    pub fn passed(&self) -> bool {
        20 * self.agreeing >= 19 * self.draws
    }
}

pub fn simulation_suite(
    kind: PolicyKind,
    draws: usize,
    n_cycles: u64,
    seed: u64,
    z_limit: f64,
) -> Result<SimulationCheck, ValidationError> {
    let mut sampler = ParamSampler::new(seed);
    let cases: Vec<_> = (0..draws).map(|i| (sampler.draw(kind), seed.wrapping_add(1 + i as u64))).collect();
    let worst_z: Vec<f64> = cases
        .par_iter()
        .map(|((model, params), sim_seed)| {
            let analytic = cycle_moments(model, params)?;
            let report = simulate(params, model, n_cycles, *sim_seed)?;
            Ok(moment_z_scores(&analytic, &report)
                .iter()
                .map(|(_, z)| z.abs())
                .fold(0.0, f64::max))
        })
        .collect::<Result<_, ValidationError>>()?;
    Ok(SimulationCheck {
        kind,
        draws,
        n_cycles,
        agreeing: worst_z.iter().filter(|&&z| z <= z_limit).count(),
        z_limit,
        worst_z,
    })
}

/// Largest absolute deviation in `(rate, aoi)` over the reduction identities
/// `simplified(p, p, c) = zero-wait(p)` and `threshold(τ₀ ≤ 1, p) = zero-wait(p)`.
pub fn reduction_suite(draws: usize, seed: u64) -> Result<f64, ValidationError> {
    let mut sampler = ParamSampler::new(seed);
    let mut worst = 0.0f64;
    for _ in 0..draws {
        let model = ArrivalModel::new(sampler.uniform(0.05, 1.0))?;
        let p = sampler.uniform(0.05, 1.0);
        let zw = evaluate(&model, &PolicyParams::ZeroWait { p })?;
        let c = sampler.integer(30);
        let others = [
            PolicyParams::SimplifiedEtatp { c, p_low: p, p_high: p },
            PolicyParams::Threshold { tau0: 0, p },
            PolicyParams::Threshold { tau0: 1, p },
        ];
        for o in &others {
            let pt = evaluate(&model, o)?;
            worst = worst.max((pt.rate - zw.rate).abs()).max((pt.aoi - zw.aoi).abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(q: f64) -> ArrivalModel {
        ArrivalModel::new(q).unwrap()
    }

    #[test]
    fn oracle_reproduces_hand_values() {
        let (r, a) = oracle_point(&model(0.5), &PolicyParams::ZeroWait { p: 0.5 }).unwrap();
        assert!((r - 2.0 / 3.0).abs() < 1e-13 && (a - 13.0 / 6.0).abs() < 1e-13);
        let params = PolicyParams::SimplifiedEtatp {
            c: 1,
            p_low: 0.5,
            p_high: 1.0,
        };
        let (r, a) = oracle_point(&model(0.5), &params).unwrap();
        assert!((r - 0.4).abs() < 1e-13 && (a - 1.7).abs() < 1e-13);
        let m = oracle_moments(&model(0.5), &PolicyParams::Threshold { tau0: 2, p: 1.0 }).unwrap();
        assert!((m.mean_z - 2.5).abs() < 1e-13 && (m.second_z - 7.5).abs() < 1e-13);
    }

    #[test]
    fn oracle_rejects_general_pmf() {
        let m = model(0.5);
        let pmf = ConditionalPmf::from_common_row(&m, 3, &[0.5, 0.5]).unwrap();
        assert!(matches!(
            oracle_point(&m, &PolicyParams::GeneralEtatp { pmf }),
            Err(ValidationError::Unsupported)
        ));
    }

    #[test]
    fn small_formula_suite_passes() {
        for kind in [PolicyKind::ZeroWait, PolicyKind::Threshold, PolicyKind::SimplifiedEtatp] {
            let chk = formula_suite(kind, 50, 11, 1e-9).unwrap();
            assert!(chk.passed(), "{chk:?}");
        }
    }

    #[test]
    fn reductions_are_exact() {
        assert!(reduction_suite(200, 5).unwrap() <= 1e-12);
    }

    #[test]
    fn constant_sample_uses_analytic_spread() {
        let m = model(0.755);
        let params = PolicyParams::Threshold { tau0: 14, p: 0.3 };
        let analytic = cycle_moments(&m, &params).unwrap();
        let report = simulate(&params, &m, 10_000, 1).unwrap();
        assert_eq!(report.se.mean_z, 0.0);
        let z = moment_z_scores(&analytic, &report);
        let mean_z = z.iter().find(|(n, _)| *n == "mean_z").unwrap().1;
        assert!(mean_z.abs() < 1.0, "{mean_z}");
    }

    #[test]
    fn sampler_is_deterministic() {
        let mut a = ParamSampler::new(3);
        let mut b = ParamSampler::new(3);
        for kind in PolicyKind::ALL {
            let (ma, pa) = a.draw(kind);
            let (mb, pb) = b.draw(kind);
            assert_eq!(ma, mb);
            assert_eq!(pa, pb);
            pa.validate().unwrap();
        }
    }
}
