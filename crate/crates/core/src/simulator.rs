//! Cycle-level Monte Carlo of any renewal policy.
//!
//! Each cycle draws the arrival time τ, applies the policy's waiting rule
//! and information delay, and accumulates exact integer sums of the cycle
//! statistics. The AoI estimate is the ratio `ΣT² / (2ΣT)`.

use rand_chacha::ChaCha12Rng;
use rand_core::{RngCore, SeedableRng};
use thiserror::Error;

use crate::policies::{PolicyError, PolicyKind, PolicyParams};
use crate::stochastics::{xlog2x, ArrivalModel};

/// Sampling algorithm identifier recorded in every report.
pub const SAMPLER_ALGORITHM: &str = "chacha12-u64/inverse-cdf-geometric/v1";

/// Clamped-arrival fraction above which a report carries a truncation warning.
pub const CLAMP_WARNING_FRACTION: f64 = 1e-6;

const BATCHES: usize = 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("n_cycles must be at least 1")]
    NoCycles,
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("report was generated for {report} but rate requested for {policy}")]
    PolicyMismatch { report: PolicyKind, policy: PolicyKind },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegimeHistogram {
    pub label: String,
    pub cycles: u64,
    /// `counts[v]` = number of cycles in this regime with `V = v`.
    pub counts: Vec<u64>,
}

impl RegimeHistogram {
    fn new(label: String, width: usize) -> Self {
        Self {
            label,
            cycles: 0,
            counts: vec![0; width],
        }
    }

    fn record(&mut self, v: u64) {
        let v = v as usize;
        if v >= self.counts.len() {
            self.counts.resize(v + 1, 0);
        }
        self.counts[v] += 1;
        self.cycles += 1;
    }

    /// Plug-in entropy of the empirical law, bits.
    pub fn plugin_entropy_bits(&self) -> f64 {
        if self.cycles == 0 {
            return 0.0;
        }
        let n = self.cycles as f64;
        self.counts.iter().map(|&c| xlog2x(c as f64 / n)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeMethod {
    DeltaMethod,
    BatchMeans,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StandardErrors {
    pub aoi: f64,
    pub mean_t: f64,
    pub second_t: f64,
    pub mean_v: f64,
    pub second_v: f64,
    pub cross_tau_v: f64,
    pub mean_z: f64,
    pub mean_tau: f64,
    pub aoi_method: SeMethod,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub policy: PolicyKind,
    pub q: f64,
    pub n_cycles: u64,
    pub seed: u64,
    pub algorithm: &'static str,
    /// `ΣT² / (2ΣT)`.
    pub aoi_hat: f64,
    pub mean_t_hat: f64,
    pub second_t_hat: f64,
    pub mean_v_hat: f64,
    pub second_v_hat: f64,
    pub cross_tau_v_hat: f64,
    pub mean_z_hat: f64,
    pub mean_tau_hat: f64,
    pub se: StandardErrors,
    pub histograms: Vec<RegimeHistogram>,
    /// Cycles whose τ exceeded the last row of a truncated pmf.
    pub clamped_cycles: u64,
    pub truncation_warning: bool,
}

/// Exact integer moment sums.
#[derive(Debug, Default, Clone, Copy)]
struct Sums {
    n: u128,
    t1: u128,
    t2: u128,
    t3: u128,
    t4: u128,
    v1: u128,
    v2: u128,
    v4: u128,
    tv1: u128,
    tv2: u128,
    z1: u128,
    z2: u128,
    tau1: u128,
    tau2: u128,
}

impl Sums {
    fn add(&mut self, tau: u64, z: u64, v: u64) {
        let (tau, z, v) = (tau as u128, z as u128, v as u128);
        let t = z + v;
        let t2 = t * t;
        self.n += 1;
        self.t1 += t;
        self.t2 += t2;
        self.t3 += t2 * t;
        self.t4 += t2 * t2;
        self.v1 += v;
        self.v2 += v * v;
        self.v4 += v * v * v * v;
        self.tv1 += tau * v;
        self.tv2 += tau * tau * v * v;
        self.z1 += z;
        self.z2 += z * z;
        self.tau1 += tau;
        self.tau2 += tau * tau;
    }
}

fn mean_and_se(sum: u128, sum_sq: u128, n: u128) -> (f64, f64) {
    let nf = n as f64;
    let mean = sum as f64 / nf;
    if n < 2 {
        return (mean, f64::NAN);
    }
    let var = (sum_sq as f64 / nf - mean * mean).max(0.0) * nf / (nf - 1.0);
    (mean, (var / nf).sqrt())
}

struct Uniform(ChaCha12Rng);

impl Uniform {
    /// Uniform on the open interval (0, 1) from the top 53 bits.
    fn next(&mut self) -> f64 {
        ((self.0.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }
}

/// Inverse-CDF geometric sampler on {0, 1, ...} with success probability `p`.
#[derive(Debug, Clone, Copy)]
struct GeomSampler {
    log_fail: f64,
}

impl GeomSampler {
    fn new(p: f64) -> Self {
        Self {
            log_fail: (1.0 - p).ln(),
        }
    }

    fn sample(&self, u: &mut Uniform) -> u64 {
        let x = u.next();
        if self.log_fail == f64::NEG_INFINITY {
            return 0;
        }
        (x.ln() / self.log_fail).floor() as u64
    }
}

enum DelayRule {
    Common(GeomSampler),
    Split { c: u64, low: GeomSampler, high: GeomSampler },
    Table { cdfs: Vec<Vec<f64>>, tau_max: u64 },
}

/// Runs `n_cycles` renewal cycles. Identical inputs give bit-identical reports.
pub fn simulate(policy: &PolicyParams, model: &ArrivalModel, n_cycles: u64, seed: u64) -> Result<SimReport, SimError> {
    if n_cycles == 0 {
        return Err(SimError::NoCycles);
    }
    policy.validate()?;
    let mut rng = Uniform(ChaCha12Rng::seed_from_u64(seed));
    let arrivals = GeomSampler::new(model.q());

    let (tau0, rule, mut hists) = match policy {
        PolicyParams::ZeroWait { p } => (0, DelayRule::Common(GeomSampler::new(*p)), vec![RegimeHistogram::new("all".into(), 1)]),
        PolicyParams::Threshold { tau0, p } => {
            (*tau0, DelayRule::Common(GeomSampler::new(*p)), vec![RegimeHistogram::new("all".into(), 1)])
        }
        PolicyParams::SimplifiedEtatp { c, p_low, p_high } => (
            0,
            DelayRule::Split {
                c: *c,
                low: GeomSampler::new(*p_low),
                high: GeomSampler::new(*p_high),
            },
            vec![
                RegimeHistogram::new(format!("tau<={c}"), 1),
                RegimeHistogram::new(format!("tau>{c}"), 1),
            ],
        ),
        PolicyParams::GeneralEtatp { pmf } => {
            let cdfs: Vec<Vec<f64>> = (1..=pmf.tau_max())
                .map(|t| {
                    let mut acc = 0.0;
                    pmf.row(t)
                        .iter()
                        .map(|&p| {
                            acc += p;
                            acc
                        })
                        .collect()
                })
                .collect();
            let width = pmf.v_max() as usize + 1;
            let hists = (1..=pmf.tau_max())
                .map(|t| RegimeHistogram::new(format!("tau={t}"), width))
                .collect();
            (
                0,
                DelayRule::Table {
                    cdfs,
                    tau_max: pmf.tau_max(),
                },
                hists,
            )
        }
    };

    let mut sums = Sums::default();
    let mut batches = [(0u128, 0u128); BATCHES];
    let batch_len = n_cycles.div_ceil(BATCHES as u64).max(1);
    let mut clamped = 0u64;
    for i in 0..n_cycles {
        let tau = 1 + arrivals.sample(&mut rng);
        let (v, regime) = match &rule {
            DelayRule::Common(g) => (g.sample(&mut rng), 0),
            DelayRule::Split { c, low, high } => {
                if tau <= *c {
                    (low.sample(&mut rng), 0)
                } else {
                    (high.sample(&mut rng), 1)
                }
            }
            DelayRule::Table { cdfs, tau_max } => {
                let row = if tau > *tau_max {
                    clamped += 1;
                    *tau_max
                } else {
                    tau
                };
                let cdf = &cdfs[(row - 1) as usize];
                let u = rng.next();
                let v = cdf.partition_point(|&c| c < u).min(cdf.len() - 1);
                (v as u64, (row - 1) as usize)
            }
        };
        let z = tau.max(tau0);
        sums.add(tau, z, v);
        hists[regime].record(v);
        let t = (z + v) as u128;
        let b = &mut batches[(i / batch_len) as usize];
        b.0 += t;
        b.1 += t * t;
    }

    let n = sums.n;
    let nf = n as f64;
    let aoi_hat = sums.t2 as f64 / (2.0 * sums.t1 as f64);
    let (mean_t, se_t) = mean_and_se(sums.t1, sums.t2, n);
    let (second_t, se_t2) = mean_and_se(sums.t2, sums.t4, n);
    let (mean_v, se_v) = mean_and_se(sums.v1, sums.v2, n);
    let (second_v, se_v2) = mean_and_se(sums.v2, sums.v4, n);
    let (cross, se_cross) = mean_and_se(sums.tv1, sums.tv2, n);
    let (mean_z, se_z) = mean_and_se(sums.z1, sums.z2, n);
    let (mean_tau, se_tau) = mean_and_se(sums.tau1, sums.tau2, n);

    // Delta method for the ratio of means A/B with A = T²/2, B = T.
    let e_t3 = sums.t3 as f64 / nf;
    let e_t4 = sums.t4 as f64 / nf;
    let var_a = (e_t4 - second_t * second_t) / 4.0;
    let cov_ab = (e_t3 - second_t * mean_t) / 2.0;
    let var_b = second_t - mean_t * mean_t;
    let delta_var = (var_a - 2.0 * aoi_hat * cov_ab + aoi_hat * aoi_hat * var_b) / (nf * mean_t * mean_t);
    let (se_aoi, aoi_method) = if n >= 2 && delta_var.is_finite() && delta_var >= 0.0 {
        (delta_var.sqrt(), SeMethod::DeltaMethod)
    } else {
        (batch_means_se(&batches), SeMethod::BatchMeans)
    };

    Ok(SimReport {
        policy: policy.kind(),
        q: model.q(),
        n_cycles,
        seed,
        algorithm: SAMPLER_ALGORITHM,
        aoi_hat,
        mean_t_hat: mean_t,
        second_t_hat: second_t,
        mean_v_hat: mean_v,
        second_v_hat: second_v,
        cross_tau_v_hat: cross,
        mean_z_hat: mean_z,
        mean_tau_hat: mean_tau,
        se: StandardErrors {
            aoi: se_aoi,
            mean_t: se_t,
            second_t: se_t2,
            mean_v: se_v,
            second_v: se_v2,
            cross_tau_v: se_cross,
            mean_z: se_z,
            mean_tau: se_tau,
            aoi_method,
        },
        histograms: hists,
        clamped_cycles: clamped,
        truncation_warning: clamped as f64 > CLAMP_WARNING_FRACTION * nf,
    })
}

fn batch_means_se(batches: &[(u128, u128)]) -> f64 {
    let ratios: Vec<f64> = batches
        .iter()
        .filter(|b| b.0 > 0)
        .map(|b| b.1 as f64 / (2.0 * b.0 as f64))
        .collect();
    let k = ratios.len() as f64;
    if ratios.len() < 2 {
        return f64::NAN;
    }
    let mean = ratios.iter().sum::<f64>() / k;
    let var = ratios.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (k - 1.0);
    (var / k).sqrt()
}

/// Plug-in rate estimate and any warnings raised while computing it.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalRate {
    pub rate: f64,
    pub warnings: Vec<String>,
}

/// Plug-in conditional entropy of the per-regime delay histograms over the
/// empirical mean cycle length. Biased low at finite sample sizes.
pub fn empirical_rate(report: &SimReport, policy: &PolicyParams) -> Result<EmpiricalRate, SimError> {
    if report.policy != policy.kind() {
        return Err(SimError::PolicyMismatch {
            report: report.policy,
            policy: policy.kind(),
        });
    }
    let n = report.n_cycles as f64;
    let mut warnings = Vec::new();
    let mut h = 0.0;
    for hist in &report.histograms {
        if hist.cycles == 0 {
            warnings.push(format!("regime {} has no cycles; contributes zero", hist.label));
            continue;
        }
        h += hist.cycles as f64 / n * hist.plugin_entropy_bits();
    }
    Ok(EmpiricalRate {
        rate: h / report.mean_t_hat,
        warnings,
    })
}
