//! Closed-form (rate, AoI) evaluation for the renewal transmission policies.
//!
//! Every policy produces i.i.d. cycles `T = Z(τ) + V`, so by renewal-reward
//! the average AoI is `E[T²] / (2 E[T])` and the timing-channel rate is
//! `H(V | τ) / E[T]` bits per slot.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::etatp::ConditionalPmf;
use crate::stochastics::{ArrivalModel, GeomDelay, StochasticsError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("parameter {name} = {value} outside (0, 1]")]
    InvalidProbability { name: &'static str, value: f64 },
    #[error("conditional pmf invalid: {0}")]
    InvalidPmf(String),
    #[error(transparent)]
    Stochastics(#[from] StochasticsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PolicyKind {
    ZeroWait,
    Threshold,
    SimplifiedEtatp,
    GeneralEtatp,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [
        PolicyKind::ZeroWait,
        PolicyKind::Threshold,
        PolicyKind::SimplifiedEtatp,
        PolicyKind::GeneralEtatp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::ZeroWait => "zero-wait",
            PolicyKind::Threshold => "threshold",
            PolicyKind::SimplifiedEtatp => "simplified-etatp",
            PolicyKind::GeneralEtatp => "etatp",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "zero-wait" | "zerowait" | "zw" => Ok(PolicyKind::ZeroWait),
            "threshold" => Ok(PolicyKind::Threshold),
            "simplified-etatp" | "simplified" => Ok(PolicyKind::SimplifiedEtatp),
            "etatp" | "general-etatp" => Ok(PolicyKind::GeneralEtatp),
            other => Err(format!("unknown policy `{other}`")),
        }
    }
}

/// Parameters of one renewal policy.
///
/// `SimplifiedEtatp` uses `p_low` when `τ ≤ c` and `p_high` when `τ > c`.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicyParams {
    ZeroWait { p: f64 },
    Threshold { tau0: u64, p: f64 },
    SimplifiedEtatp { c: u64, p_low: f64, p_high: f64 },
    GeneralEtatp { pmf: ConditionalPmf },
}

impl PolicyParams {
    pub fn kind(&self) -> PolicyKind {
        match self {
            PolicyParams::ZeroWait { .. } => PolicyKind::ZeroWait,
            PolicyParams::Threshold { .. } => PolicyKind::Threshold,
            PolicyParams::SimplifiedEtatp { .. } => PolicyKind::SimplifiedEtatp,
            PolicyParams::GeneralEtatp { .. } => PolicyKind::GeneralEtatp,
        }
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        fn prob(name: &'static str, value: f64) -> Result<(), PolicyError> {
            if value > 0.0 && value <= 1.0 {
                Ok(())
            } else {
                Err(PolicyError::InvalidProbability { name, value })
            }
        }
        match self {
            PolicyParams::ZeroWait { p } | PolicyParams::Threshold { p, .. } => prob("p", *p),
            PolicyParams::SimplifiedEtatp { p_low, p_high, .. } => {
                prob("p_low", *p_low)?;
                prob("p_high", *p_high)
            }
            PolicyParams::GeneralEtatp { pmf } => pmf.validate().map_err(PolicyError::InvalidPmf),
        }
    }

    /// Named scalar parameters, in a fixed order per policy.
    pub fn named_values(&self) -> Vec<(&'static str, f64)> {
        match self {
            PolicyParams::ZeroWait { p } => vec![("p", *p)],
            PolicyParams::Threshold { tau0, p } => vec![("tau0", *tau0 as f64), ("p", *p)],
            PolicyParams::SimplifiedEtatp { c, p_low, p_high } => {
                vec![("c", *c as f64), ("p_low", *p_low), ("p_high", *p_high)]
            }
            PolicyParams::GeneralEtatp { pmf } => vec![
                ("m", pmf.mean_cycle()),
                ("tau_max", pmf.tau_max() as f64),
                ("v_max", pmf.v_max() as f64),
            ],
        }
    }
}

/// One achievable (rate, AoI) pair and the policy that attains it.
#[derive(Debug, Clone, PartialEq)]
pub struct TradeoffPoint {
    /// Bits per slot.
    pub rate: f64,
    /// Slots.
    pub aoi: f64,
    pub params: PolicyParams,
}

/// First and second moments of one renewal cycle `T = Z + V`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleMoments {
    pub mean_tau: f64,
    pub mean_z: f64,
    pub second_z: f64,
    pub mean_v: f64,
    pub second_v: f64,
    /// `E[τ V]`.
    pub cross_tau_v: f64,
    pub mean_t: f64,
    pub second_t: f64,
    /// `H(V | τ)` in bits.
    pub entropy_bits: f64,
}

impl CycleMoments {
    pub fn rate(&self) -> f64 {
        self.entropy_bits / self.mean_t
    }

    pub fn aoi(&self) -> f64 {
        self.second_t / (2.0 * self.mean_t)
    }
}

/// `(E[max(τ, τ₀)], E[max(τ, τ₀)²])`.
pub fn threshold_moments(model: &ArrivalModel, tau0: u64) -> (f64, f64) {
    let q = model.q();
    let t0 = tau0 as f64;
    let tail = model.survival(tau0);
    let ez = t0 + tail / q;
    let ez2 = t0 * t0 + tail * ((2.0 - q) / (q * q) + 2.0 * t0 / q);
    (ez, ez2)
}

/// `(E[τ·1{τ≤c}], E[τ·1{τ>c}])`.
pub(crate) fn split_tau_mean(model: &ArrivalModel, c: u64) -> (f64, f64) {
    let q = model.q();
    let high = model.survival(c) * (1.0 + c as f64 * q) / q;
    (1.0 / q - high, high)
}

fn separable_moments(model: &ArrivalModel, ez: f64, ez2: f64, delay: GeomDelay) -> CycleMoments {
    let tm = model.tau_moments();
    let vm = delay.moments();
    CycleMoments {
        mean_tau: tm.mean,
        mean_z: ez,
        second_z: ez2,
        mean_v: vm.mean,
        second_v: vm.second_moment,
        cross_tau_v: tm.mean * vm.mean,
        mean_t: ez + vm.mean,
        second_t: ez2 + 2.0 * ez * vm.mean + vm.second_moment,
        entropy_bits: vm.entropy_bits,
    }
}

fn simplified_moments(model: &ArrivalModel, c: u64, low: GeomDelay, high: GeomDelay) -> CycleMoments {
    let tm = model.tau_moments();
    let w_high = model.survival(c);
    let w_low = 1.0 - w_high;
    let (tau_low, tau_high) = split_tau_mean(model, c);
    let lm = low.moments();
    let hm = high.moments();
    let mean_v = w_low * lm.mean + w_high * hm.mean;
    let second_v = w_low * lm.second_moment + w_high * hm.second_moment;
    let cross = lm.mean * tau_low + hm.mean * tau_high;
    CycleMoments {
        mean_tau: tm.mean,
        mean_z: tm.mean,
        second_z: tm.second_moment,
        mean_v,
        second_v,
        cross_tau_v: cross,
        mean_t: tm.mean + mean_v,
        second_t: tm.second_moment + second_v + 2.0 * cross,
        entropy_bits: w_low * lm.entropy_bits + w_high * hm.entropy_bits,
    }
}

/// Exact cycle moments of any policy.
pub fn cycle_moments(model: &ArrivalModel, params: &PolicyParams) -> Result<CycleMoments, PolicyError> {
    params.validate()?;
    Ok(match params {
        PolicyParams::ZeroWait { p } => {
            let tm = model.tau_moments();
            separable_moments(model, tm.mean, tm.second_moment, GeomDelay::new(*p)?)
        }
        PolicyParams::Threshold { tau0, p } => {
            let (ez, ez2) = threshold_moments(model, *tau0);
            separable_moments(model, ez, ez2, GeomDelay::new(*p)?)
        }
        PolicyParams::SimplifiedEtatp { c, p_low, p_high } => {
            simplified_moments(model, *c, GeomDelay::new(*p_low)?, GeomDelay::new(*p_high)?)
        }
        PolicyParams::GeneralEtatp { pmf } => pmf.cycle_moments(),
    })
}

pub fn evaluate(model: &ArrivalModel, params: &PolicyParams) -> Result<TradeoffPoint, PolicyError> {
    let m = cycle_moments(model, params)?;
    Ok(TradeoffPoint {
        rate: m.rate(),
        aoi: m.aoi(),
        params: params.clone(),
    })
}

pub fn zero_wait_point(model: &ArrivalModel, p: f64) -> Result<TradeoffPoint, PolicyError> {
    evaluate(model, &PolicyParams::ZeroWait { p })
}

pub fn threshold_point(model: &ArrivalModel, tau0: u64, p: f64) -> Result<TradeoffPoint, PolicyError> {
    evaluate(model, &PolicyParams::Threshold { tau0, p })
}

pub fn simplified_point(
    model: &ArrivalModel,
    c: u64,
    p_low: f64,
    p_high: f64,
) -> Result<TradeoffPoint, PolicyError> {
    evaluate(model, &PolicyParams::SimplifiedEtatp { c, p_low, p_high })
}

/// Unchecked (rate, AoI) of a separable policy with cycle `Z + V`, `V ~ Geom(p)`.
pub(crate) fn separable_rate_aoi(ez: f64, ez2: f64, p: f64) -> (f64, f64) {
    let (ev, ev2, h) = if p >= 1.0 {
        (0.0, 0.0, 0.0)
    } else {
        (
            (1.0 - p) / p,
            (2.0 - 3.0 * p + p * p) / (p * p),
            crate::stochastics::h2(p) / p,
        )
    };
    let et = ez + ev;
    (h / et, (ez2 + 2.0 * ez * ev + ev2) / (2.0 * et))
}
