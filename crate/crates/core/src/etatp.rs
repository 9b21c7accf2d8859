//! Energy-timing adaptive transmission: the general renewal policy whose
//! information delay law `p(v | τ)` may depend arbitrarily on the arrival
//! time.
//!
//! For a fixed mean cycle length `m` the problem
//!
//! ```text
//!   max  Σ_t w_t H(p(·|t))
//!   s.t. Σ_t w_t Σ_v p(v|t) (v+t)  = m
//!        Σ_t w_t Σ_v p(v|t) (v+t)² ≤ 2 α m
//! ```
//!
//! is concave over a product of simplices. Its Lagrange dual is a smooth
//! convex function of two multipliers, and every row of the primal
//! optimizer is a Gibbs law `p(v|t) ∝ exp(-a·x - b·x²)` with `x = t + v`.
//! [`solve_inner`] minimizes the dual by damped Newton and certifies the
//! result with the duality gap. [`solve_outer`] line-searches over `m` to
//! obtain `R(α)`.
//!
//! The minimum AoI at a rate floor, used for frontier sweeps, is solved
//! directly as the fractional program `min E[T²]/(2E[T])` subject to
//! `H(V|τ) ≥ r E[T]` by Dinkelbach iteration; its inner problems live in
//! the same Gibbs family with a one-dimensional dual.

use std::f64::consts::LN_2;

use thiserror::Error;

use crate::policies::{CycleMoments, PolicyKind, PolicyParams, TradeoffPoint};
use crate::region::{CurveMetadata, TradeoffCurve};
use crate::search::{golden_section, max_rate_zero_wait};
use crate::stochastics::{xlog2x, ArrivalModel, NeumaierSum};

/// Geometric tail mass left outside the truncated τ and v ranges.
pub const DEFAULT_TAIL: f64 = 1e-10;
pub const DEFAULT_EPS_BITS: f64 = 1e-8;
pub const DEFAULT_M_GRID: usize = 64;

const MAX_NEWTON: usize = 500;
const MEAN_TOL: f64 = 1e-12;
/// Rows whose peak sits this many nats below the global peak get their own shift.
const LOCAL_SHIFT_NATS: f64 = 600.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EtatpError {
    #[error("infeasible instance (m = {m}, alpha = {alpha}): {reason}")]
    Infeasible { m: f64, alpha: f64, reason: String },
    #[error("dual solver did not converge in {iterations} iterations (gap bound {gap:e} bits, residual {residual:e})")]
    NonConvergence { iterations: usize, gap: f64, residual: f64 },
    #[error("no feasible mean cycle length for alpha = {alpha}")]
    NoFeasibleM { alpha: f64 },
    #[error("alpha = {alpha} is at or below the AoI lower bound {bound}")]
    Boundary { alpha: f64, bound: f64 },
    #[error("rate floor {r} exceeds the class maximum {r_star}")]
    RateAboveMax { r: f64, r_star: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Truncation of the τ and v supports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Truncation {
    pub tau_max: u64,
    pub v_max: u64,
}

impl Truncation {
    pub fn new(tau_max: u64, v_max: u64) -> Self {
        Self { tau_max, v_max }
    }

    /// `tau_max` leaves less than 1e-10 of arrival mass behind; `v_max`
    /// leaves less than 1e-10 of the rate-maximizing geometric delay behind.
    pub fn default_for(model: &ArrivalModel) -> Self {
        let tau_max = model.truncation_point(DEFAULT_TAIL);
        let (_, p_star) = max_rate_zero_wait(model);
        let v_max = if p_star >= 1.0 {
            1
        } else {
            ((DEFAULT_TAIL.ln() / (1.0 - p_star).ln()).ceil() as u64).max(1)
        };
        Self { tau_max, v_max }
    }
}

/// Truncated conditional law `p(v | τ)` on `τ ∈ {1..tau_max}`, `v ∈ {0..v_max}`.
///
/// The τ weights are the geometric arrival law renormalized to the
/// truncated range; the discarded mass is kept in `tau_tail`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalPmf {
    tau_max: u64,
    v_max: u64,
    rows: Vec<f64>,
    tau_weights: Vec<f64>,
    tau_tail: f64,
}

/// Renormalized truncated geometric weights and the discarded tail.
pub fn tau_weights(model: &ArrivalModel, tau_max: u64) -> (Vec<f64>, f64) {
    let tail = model.survival(tau_max);
    let kept = 1.0 - tail;
    let w = (1..=tau_max).map(|t| model.pmf(t) / kept).collect();
    (w, tail)
}

impl ConditionalPmf {
    /// Builds a pmf from row-major rows (`tau_max` rows of `v_max + 1` entries).
    pub fn new(model: &ArrivalModel, trunc: Truncation, rows: Vec<f64>) -> Result<Self, EtatpError> {
        if trunc.tau_max == 0 {
            return Err(EtatpError::InvalidInput("tau_max must be at least 1".into()));
        }
        let width = trunc.v_max as usize + 1;
        if rows.len() != trunc.tau_max as usize * width {
            return Err(EtatpError::InvalidInput(format!(
                "expected {} entries, got {}",
                trunc.tau_max as usize * width,
                rows.len()
            )));
        }
        let (tau_weights, tau_tail) = tau_weights(model, trunc.tau_max);
        let pmf = Self {
            tau_max: trunc.tau_max,
            v_max: trunc.v_max,
            rows,
            tau_weights,
            tau_tail,
        };
        pmf.validate().map_err(EtatpError::InvalidInput)?;
        Ok(pmf)
    }

    /// The same law for every τ.
    pub fn from_common_row(model: &ArrivalModel, tau_max: u64, row: &[f64]) -> Result<Self, EtatpError> {
        let v_max = row.len().saturating_sub(1) as u64;
        let rows = (0..tau_max).flat_map(|_| row.iter().copied()).collect();
        Self::new(model, Truncation::new(tau_max, v_max), rows)
    }

    pub fn validate(&self) -> Result<(), String> {
        let width = self.v_max as usize + 1;
        for (i, row) in self.rows.chunks(width).enumerate() {
            if row.iter().any(|&p| !(p >= 0.0)) {
                return Err(format!("row {} has a negative or NaN entry", i + 1));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-10 {
                return Err(format!("row {} sums to {s}", i + 1));
            }
        }
        let w: f64 = self.tau_weights.iter().sum();
        if (w - 1.0).abs() > 1e-12 {
            return Err(format!("tau weights sum to {w}"));
        }
        Ok(())
    }

    pub fn tau_max(&self) -> u64 {
        self.tau_max
    }

    pub fn v_max(&self) -> u64 {
        self.v_max
    }

    pub fn truncation(&self) -> Truncation {
        Truncation::new(self.tau_max, self.v_max)
    }

    /// Row for `τ = t`, `1 ≤ t ≤ tau_max`.
    pub fn row(&self, t: u64) -> &[f64] {
        let width = self.v_max as usize + 1;
        let i = (t - 1) as usize;
        &self.rows[i * width..(i + 1) * width]
    }

    pub fn tau_weights(&self) -> &[f64] {
        &self.tau_weights
    }

    /// Arrival mass beyond `tau_max` dropped by the renormalization.
    pub fn tau_tail(&self) -> f64 {
        self.tau_tail
    }

    pub fn entropy_bits(&self) -> f64 {
        let mut h = NeumaierSum::default();
        for (t, &w) in (1..=self.tau_max).zip(&self.tau_weights) {
            h.add(w * self.row(t).iter().map(|&p| xlog2x(p)).sum::<f64>());
        }
        h.total()
    }

    pub fn mean_cycle(&self) -> f64 {
        self.cycle_moments().mean_t
    }

    pub fn cycle_moments(&self) -> CycleMoments {
        let mut acc = [NeumaierSum::default(); 7];
        for (t, &w) in (1..=self.tau_max).zip(&self.tau_weights) {
            let tf = t as f64;
            let (mut ev, mut ev2) = (0.0, 0.0);
            for (v, &p) in self.row(t).iter().enumerate() {
                let vf = v as f64;
                ev += p * vf;
                ev2 += p * vf * vf;
            }
            acc[0].add(w * tf);
            acc[1].add(w * tf * tf);
            acc[2].add(w * ev);
            acc[3].add(w * ev2);
            acc[4].add(w * tf * ev);
            acc[5].add(w * (tf + ev));
            acc[6].add(w * (tf * tf + 2.0 * tf * ev + ev2));
        }
        let [mean_tau, second_tau, mean_v, second_v, cross, mean_t, second_t] = acc.map(|a| a.total());
        CycleMoments {
            mean_tau,
            mean_z: mean_tau,
            second_z: second_tau,
            mean_v,
            second_v,
            cross_tau_v: cross,
            mean_t,
            second_t,
            entropy_bits: self.entropy_bits(),
        }
    }

    /// (rate, AoI) of this law under its truncated arrival weights.
    pub fn rate_aoi(&self) -> (f64, f64) {
        let m = self.cycle_moments();
        (m.rate(), m.aoi())
    }
}

/// Weighted statistics of the Gibbs family `p(x|t) ∝ exp(-a y - b y²)`, `y = x/scale`.
#[derive(Debug, Default, Clone, Copy)]
struct GibbsStats {
    /// `Σ_t w_t ln Z_t`.
    log_z: f64,
    /// `Σ_t w_t H_t` in nats.
    entropy: f64,
    m1: f64,
    m2: f64,
    h11: f64,
    h12: f64,
    h22: f64,
}

#[derive(Debug, Clone)]
struct Lattice {
    tau_max: usize,
    v_max: usize,
    weights: Vec<f64>,
    tail: f64,
    mean_min: f64,
    mean_max: f64,
}

impl Lattice {
    fn new(model: &ArrivalModel, trunc: Truncation) -> Self {
        let (weights, tail) = tau_weights(model, trunc.tau_max);
        let mean_min: f64 = weights.iter().enumerate().map(|(i, w)| w * (i + 1) as f64).sum();
        Self {
            tau_max: trunc.tau_max as usize,
            v_max: trunc.v_max as usize,
            weights,
            tail,
            mean_min,
            mean_max: mean_min + trunc.v_max as f64,
        }
    }

    fn trunc(&self) -> Truncation {
        Truncation::new(self.tau_max as u64, self.v_max as u64)
    }

    fn n_x(&self) -> usize {
        self.tau_max + self.v_max
    }

    /// Gibbs statistics; when `rows` is given it receives the row-major pmf.
    fn gibbs(&self, a: f64, b: f64, scale: f64, mut rows: Option<&mut Vec<f64>>) -> GibbsStats {
        let n_x = self.n_x();
        let ys: Vec<f64> = (0..=n_x).map(|x| x as f64 / scale).collect();
        let gx: Vec<f64> = ys.iter().map(|&y| -a * y - b * y * y).collect();
        let gmax = gx[1..].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let ex: Vec<f64> = gx.iter().map(|&g| (g - gmax).exp()).collect();
        if let Some(r) = rows.as_deref_mut() {
            r.clear();
            r.reserve(self.tau_max * (self.v_max + 1));
        }

        let mut out = [NeumaierSum::default(); 7];
        let vertex = if b > 0.0 { Some(-a * scale / (2.0 * b)) } else { None };
        for t in 1..=self.tau_max {
            let (lo, hi) = (t, t + self.v_max);
            let mut peak = if gx[lo] >= gx[hi] { lo } else { hi };
            if let Some(xv) = vertex {
                if xv > lo as f64 && xv < hi as f64 {
                    for cand in [xv.floor() as usize, xv.ceil() as usize] {
                        let c = cand.clamp(lo, hi);
                        if gx[c] > gx[peak] {
                            peak = c;
                        }
                    }
                }
            }
            let m_t = gx[peak];
            let y0 = ys[peak];
            let local = gmax - m_t > LOCAL_SHIFT_NATS;
            let (mut s0, mut s1, mut s2, mut s3, mut s4, mut sg) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
            for x in lo..=hi {
                let e = if local { (gx[x] - m_t).exp() } else { ex[x] };
                let d = ys[x] - y0;
                let d2 = d * d;
                s0 += e;
                s1 += e * d;
                s2 += e * d2;
                s3 += e * d2 * d;
                s4 += e * d2 * d2;
                sg += e * (gx[x] - m_t);
            }
            let ln_s0 = s0.ln();
            let ln_z = if local { m_t + ln_s0 } else { gmax + ln_s0 };
            let h_t = ln_z - m_t - sg / s0;
            let (ed, ed2, ed3, ed4) = (s1 / s0, s2 / s0, s3 / s0, s4 / s0);
            let var_d = (ed2 - ed * ed).max(0.0);
            let cov_dd2 = ed3 - ed * ed2;
            let var_d2 = (ed4 - ed2 * ed2).max(0.0);
            let ey = y0 + ed;
            let ey2 = y0 * y0 + 2.0 * y0 * ed + ed2;
            let w = self.weights[t - 1];
            out[0].add(w * ln_z);
            out[1].add(w * h_t.max(0.0));
            out[2].add(w * ey);
            out[3].add(w * ey2);
            out[4].add(w * var_d);
            out[5].add(w * (cov_dd2 + 2.0 * y0 * var_d));
            out[6].add(w * (var_d2 + 4.0 * y0 * cov_dd2 + 4.0 * y0 * y0 * var_d));
            if let Some(r) = rows.as_deref_mut() {
                for x in lo..=hi {
                    let e = if local { (gx[x] - m_t).exp() } else { ex[x] };
                    r.push(e / s0);
                }
            }
        }
        let [log_z, entropy, m1, m2, h11, h12, h22] = out.map(|s| s.total());
        GibbsStats {
            log_z,
            entropy,
            m1,
            m2,
            h11,
            h12,
            h22,
        }
    }

    /// Deterministic rows `x_t = clamp(target, t, t+v_max)` with `target = ⌊c + ½⌋`.
    fn clamp_choice(&self, center: f64) -> Vec<usize> {
        let target = (center + 0.5).floor();
        (1..=self.tau_max)
            .map(|t| {
                let hi = (t + self.v_max) as f64;
                target.clamp(t as f64, hi) as usize
            })
            .collect()
    }

    fn choice_moments(&self, xs: &[usize]) -> (f64, f64) {
        let mut m1 = NeumaierSum::default();
        let mut m2 = NeumaierSum::default();
        for (&x, &w) in xs.iter().zip(&self.weights) {
            let xf = x as f64;
            m1.add(w * xf);
            m2.add(w * xf * xf);
        }
        (m1.total(), m2.total())
    }

    /// Minimum of `E[x²]` over all laws with `E[x] = m` (a linear program).
    ///
    /// Per-row minimizers of `x² - λx` are clamped nearest integers to `λ/2`;
    /// bisection on `λ` locates the kink where the mean crosses `m`, and the
    /// optimum mixes the two adjacent vertex solutions.
    fn min_second_moment(&self, m: f64) -> Option<f64> {
        if m < self.mean_min * (1.0 - 1e-14) || m > self.mean_max * (1.0 + 1e-14) {
            return None;
        }
        let mean_at = |lambda: f64| self.choice_moments(&self.clamp_choice(lambda / 2.0));
        let (mut lo, mut hi) = (0.0, 2.0 * (self.n_x() as f64 + 1.0));
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid == lo || mid == hi {
                break;
            }
            if mean_at(mid).0 < m {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (m_lo, s_lo) = mean_at(lo);
        let (m_hi, s_hi) = mean_at(hi);
        if m_hi - m_lo <= 0.0 {
            return Some(s_hi);
        }
        let theta = ((m - m_lo) / (m_hi - m_lo)).clamp(0.0, 1.0);
        Some((1.0 - theta) * s_lo + theta * s_hi)
    }
}

/// Result of the inner concave program at fixed `(α, m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerSolution {
    pub pmf: ConditionalPmf,
    pub entropy_bits: f64,
    pub m: f64,
    /// `entropy_bits / m`, bits per slot.
    pub objective: f64,
    /// Largest of the mean residual, second-moment violation and
    /// complementary-slackness product, in slots.
    pub kkt_residual: f64,
    /// Certified bound on `H* - entropy_bits`, in bits.
    pub duality_gap_bound: f64,
    /// `2αm - E[T²]` (infinite when the AoI constraint is dropped).
    pub alpha_slack: f64,
    /// Arrival mass dropped by truncation.
    pub tau_tail: f64,
    pub iterations: usize,
    /// Multiplier of the second-moment constraint, nats per slot².
    pub(crate) second_moment_multiplier: f64,
}

/// `R(α)` and the policy attaining it.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterSolution {
    pub point: TradeoffPoint,
    pub inner: InnerSolution,
}

/// Minimum-AoI policy at a rate floor.
#[derive(Debug, Clone, PartialEq)]
pub struct RateSolution {
    /// Realized rate (≥ the floor) and AoI of the returned law.
    pub point: TradeoffPoint,
    /// Certified lower bound on the optimal AoI over the truncated class.
    pub aoi_lower_bound: f64,
    pub tau_tail: f64,
    pub iterations: usize,
}

/// Numerical options shared by the solver entry points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EtatpOptions {
    pub trunc: Truncation,
    /// Required duality-gap bound, bits.
    pub eps: f64,
    /// Coarse grid size of the outer search over `m`.
    pub m_grid: usize,
    /// Skip the golden-section refinement after the `m` grid.
    pub pure_grid: bool,
}

impl EtatpOptions {
    pub fn default_for(model: &ArrivalModel) -> Self {
        Self {
            trunc: Truncation::default_for(model),
            eps: DEFAULT_EPS_BITS,
            m_grid: DEFAULT_M_GRID,
            pure_grid: false,
        }
    }

    pub fn with_trunc(mut self, trunc: Truncation) -> Self {
        self.trunc = trunc;
        self
    }
}

/// Solver bound to one arrival model and truncation.
#[derive(Debug, Clone)]
pub struct EtatpSolver {
    model: ArrivalModel,
    lattice: Lattice,
    opts: EtatpOptions,
}

impl EtatpSolver {
    pub fn new(model: ArrivalModel, opts: EtatpOptions) -> Result<Self, EtatpError> {
        if opts.trunc.tau_max == 0 {
            return Err(EtatpError::InvalidInput("tau_max must be at least 1".into()));
        }
        if !(opts.eps > 0.0) {
            return Err(EtatpError::InvalidInput("eps must be positive".into()));
        }
        Ok(Self {
            lattice: Lattice::new(&model, opts.trunc),
            model,
            opts,
        })
    }

    pub fn model(&self) -> &ArrivalModel {
        &self.model
    }

    pub fn options(&self) -> &EtatpOptions {
        &self.opts
    }

    /// Range `[E[τ], E[τ] + v_max]` of attainable mean cycle lengths.
    pub fn mean_range(&self) -> (f64, f64) {
        (self.lattice.mean_min, self.lattice.mean_max)
    }

    /// Minimum `E[T²]` at mean `m` over the truncated class.
    pub fn min_second_moment(&self, m: f64) -> Option<f64> {
        self.lattice.min_second_moment(m)
    }

    fn pmf_from_rows(&self, rows: Vec<f64>) -> ConditionalPmf {
        let (tau_weights, tau_tail) = (self.lattice.weights.clone(), self.lattice.tail);
        ConditionalPmf {
            tau_max: self.lattice.tau_max as u64,
            v_max: self.lattice.v_max as u64,
            rows,
            tau_weights,
            tau_tail,
        }
    }

    fn deterministic_pmf(&self, xs: &[usize]) -> ConditionalPmf {
        let width = self.lattice.v_max + 1;
        let mut rows = vec![0.0; self.lattice.tau_max * width];
        for (i, &x) in xs.iter().enumerate() {
            rows[i * width + (x - (i + 1))] = 1.0;
        }
        self.pmf_from_rows(rows)
    }

    /// Maximizes `H(V|τ)` at mean cycle `m` under `E[T²] ≤ 2αm`.
    /// `alpha = ∞` drops the AoI constraint.
    pub fn solve_inner(&self, alpha: f64, m: f64) -> Result<InnerSolution, EtatpError> {
        if !(alpha > 0.0) || !m.is_finite() {
            return Err(EtatpError::InvalidInput(format!("alpha = {alpha}, m = {m}")));
        }
        let s_bound = 2.0 * alpha * m;
        self.solve_bounded(m, s_bound, alpha)
    }

    fn solve_bounded(&self, m: f64, s_bound: f64, alpha: f64) -> Result<InnerSolution, EtatpError> {
        let lat = &self.lattice;
        let infeasible = |reason: String| EtatpError::Infeasible { m, alpha, reason };
        let s_min = lat.min_second_moment(m).ok_or_else(|| {
            infeasible(format!("mean outside [{}, {}]", lat.mean_min, lat.mean_max))
        })?;
        if s_bound.is_finite() && s_bound < s_min * (1.0 - 1e-13) {
            return Err(infeasible(format!("E[T^2] >= {s_min} exceeds 2*alpha*m = {s_bound}")));
        }
        // Mean at an endpoint of its range pins every row to a point mass.
        let at_min = m <= lat.mean_min * (1.0 + 1e-13);
        let at_max = m >= lat.mean_max * (1.0 - 1e-13);
        if at_min || at_max {
            let xs: Vec<usize> = (1..=lat.tau_max).map(|t| if at_min { t } else { t + lat.v_max }).collect();
            return Ok(self.finish_inner(self.deterministic_pmf(&xs), m, s_bound, 0.0, 0.0, 0));
        }
        if s_bound.is_finite() && s_bound <= s_min * (1.0 + 1e-12) {
            return Err(infeasible("AoI constraint admits only the boundary law".into()));
        }

        let scale = m;
        let mt = 1.0;
        let st = s_bound / (scale * scale);
        let constrained = s_bound.is_finite();

        // Phase 1: mean constraint only.
        let (mut a, mut iterations) = self.solve_mean_only(mt, scale)?;
        let mut b = 0.0;
        let mut stats = lat.gibbs(a, b, scale, None);

        if constrained && stats.m2 > st {
            // Phase 2: both constraints, damped Newton on the convex dual.
            let dual = |s: &GibbsStats, a: f64, b: f64| s.log_z + a * mt + b * st;
            let mut d_cur = dual(&stats, a, b);
            loop {
                let g1 = mt - stats.m1;
                let g2 = st - stats.m2;
                let gap = (a * g1 + b * g2).abs() / LN_2;
                if g1.abs() <= MEAN_TOL && g2.abs() <= MEAN_TOL * st && gap <= 0.1 * self.opts.eps {
                    break;
                }
                if iterations >= MAX_NEWTON {
                    return Err(EtatpError::NonConvergence {
                        iterations,
                        gap,
                        residual: g1.abs().max(g2.abs()),
                    });
                }
                iterations += 1;
                let ridge = 1e-14 * (stats.h11 + stats.h22).max(1e-300);
                let (h11, h12, h22) = (stats.h11 + ridge, stats.h12, stats.h22 + ridge);
                let det = h11 * h22 - h12 * h12;
                let (mut da, mut db) = if det > 0.0 {
                    ((-h22 * g1 + h12 * g2) / det, (h12 * g1 - h11 * g2) / det)
                } else {
                    (-g1 / h11, -g2 / h22)
                };
                if b == 0.0 && db < 0.0 {
                    db = 0.0;
                    da = -g1 / h11;
                }
                let slope = g1 * da + g2 * db;
                let mut step = 1.0;
                let mut accepted = false;
                for _ in 0..60 {
                    let na = a + step * da;
                    let nb = (b + step * db).max(0.0);
                    let ns = lat.gibbs(na, nb, scale, None);
                    let nd = dual(&ns, na, nb);
                    if nd.is_finite() && nd <= d_cur + 1e-4 * step * slope.min(0.0) + 1e-15 * d_cur.abs() {
                        a = na;
                        b = nb;
                        stats = ns;
                        d_cur = nd;
                        accepted = true;
                        break;
                    }
                    step *= 0.5;
                }
                if !accepted {
                    // No further descent is representable; accept if the certificate holds.
                    let gap = (a * g1 + b * g2).abs() / LN_2;
                    if g1.abs() <= 1e-10 && g2 >= -1e-10 * st && gap <= self.opts.eps {
                        break;
                    }
                    return Err(EtatpError::NonConvergence {
                        iterations,
                        gap,
                        residual: g1.abs().max(g2.abs()),
                    });
                }
            }
        }

        let mut rows = Vec::new();
        let stats_final = lat.gibbs(a, b, scale, Some(&mut rows));
        let _ = stats_final;
        let pmf = self.pmf_from_rows(rows);
        Ok(self.finish_inner(pmf, m, s_bound, a, b / (scale * scale), iterations))
    }

    /// One-dimensional dual for the mean constraint alone: returns the
    /// multiplier `a` (scaled units) and the iteration count.
    fn solve_mean_only(&self, mt: f64, scale: f64) -> Result<(f64, usize), EtatpError> {
        let lat = &self.lattice;
        let mean = |a: f64| lat.gibbs(a, 0.0, scale, None);
        // E[y] is decreasing in a; bracket the root.
        let (mut lo, mut hi) = (-1.0, 1.0);
        let mut expand = 0;
        while mean(lo).m1 < mt {
            lo *= 2.0;
            expand += 1;
            if expand > 200 {
                return Err(EtatpError::NonConvergence { iterations: expand, gap: f64::INFINITY, residual: f64::INFINITY });
            }
        }
        while mean(hi).m1 > mt {
            hi *= 2.0;
            expand += 1;
            if expand > 200 {
                return Err(EtatpError::NonConvergence { iterations: expand, gap: f64::INFINITY, residual: f64::INFINITY });
            }
        }
        let mut a = 0.0f64.clamp(lo, hi);
        let mut it = 0;
        loop {
            let s = mean(a);
            let g = mt - s.m1;
            if g.abs() <= MEAN_TOL * 0.1 {
                break;
            }
            if g > 0.0 {
                hi = a;
            } else {
                lo = a;
            }
            // Newton on the decreasing mean; fall back to bisection outside the bracket.
            let mut next = if s.h11 > 0.0 { a - g / s.h11 } else { f64::NAN };
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if next == a || hi - lo <= f64::EPSILON * a.abs().max(1.0) {
                break;
            }
            a = next;
            it += 1;
            if it > MAX_NEWTON {
                return Err(EtatpError::NonConvergence { iterations: it, gap: f64::INFINITY, residual: g.abs() });
            }
        }
        Ok((a, it))
    }

    fn finish_inner(&self, pmf: ConditionalPmf, m: f64, s_bound: f64, a: f64, b_raw: f64, iterations: usize) -> InnerSolution {
        let cm = pmf.cycle_moments();
        let entropy_bits = cm.entropy_bits;
        let mean_res = (cm.mean_t - m).abs();
        let slack = s_bound - cm.second_t;
        let viol = if slack < 0.0 { -slack } else { 0.0 };
        let comp = if s_bound.is_finite() { (b_raw * slack).abs() } else { 0.0 };
        // D - H(P) = a·(m - E[x])/scale + b·(s - E[x²]), in nats.
        let gap_nats = a * (m - cm.mean_t) / m + if s_bound.is_finite() { b_raw * slack } else { 0.0 };
        InnerSolution {
            objective: entropy_bits / m,
            entropy_bits,
            m,
            kkt_residual: mean_res.max(viol).max(comp),
            duality_gap_bound: gap_nats.abs() / LN_2,
            alpha_slack: slack,
            tau_tail: pmf.tau_tail(),
            iterations,
            second_moment_multiplier: b_raw,
            pmf,
        }
    }

    /// `R(α) = max_m H*(m; α) / m`.
    pub fn solve_outer(&self, alpha: f64) -> Result<OuterSolution, EtatpError> {
        let bound = 0.5 / self.model.q();
        if !(alpha > bound * (1.0 + 1e-12)) {
            return Err(EtatpError::Boundary { alpha, bound });
        }
        let lat = &self.lattice;
        let (m1, m2) = if alpha.is_finite() {
            let psi = |m: f64| lat.min_second_moment(m).map_or(f64::INFINITY, |s| s - 2.0 * alpha * m);
            let hi = lat.mean_max.min(2.0 * alpha);
            if hi < lat.mean_min {
                return Err(EtatpError::NoFeasibleM { alpha });
            }
            let (mc, pc) = golden_section(psi, lat.mean_min, hi, 1e-12 * hi);
            let (mc, pc) = [(lat.mean_min, psi(lat.mean_min)), (hi, psi(hi))]
                .into_iter()
                .fold((mc, pc), |best, c| if c.1 < best.1 { c } else { best });
            if pc > 0.0 {
                return Err(EtatpError::NoFeasibleM { alpha });
            }
            let root = |mut good: f64, mut bad: f64| {
                if psi(bad) <= 0.0 {
                    return bad;
                }
                for _ in 0..200 {
                    let mid = 0.5 * (good + bad);
                    if mid == good || mid == bad {
                        break;
                    }
                    if psi(mid) <= 0.0 {
                        good = mid;
                    } else {
                        bad = mid;
                    }
                }
                good
            };
            (root(mc, lat.mean_min), root(mc, hi))
        } else {
            (lat.mean_min, lat.mean_max)
        };

        let objective = |m: f64| match self.solve_inner(alpha, m) {
            Ok(sol) => -sol.objective,
            Err(_) => 0.0,
        };
        let n = self.opts.m_grid.max(2);
        // Interior grid: the interval endpoints only admit boundary laws.
        let step = (m2 - m1) / n as f64;
        let grid_x = |i: usize| m1 + step * (i as f64 + 0.5);
        let mut best_i = 0;
        let mut best_f = f64::INFINITY;
        for i in 0..n {
            let f = objective(grid_x(i));
            if f < best_f {
                best_f = f;
                best_i = i;
            }
        }
        let mut m_best = grid_x(best_i);
        if !self.opts.pure_grid && m2 > m1 {
            let a = if best_i == 0 { m1 } else { grid_x(best_i - 1) };
            let b = if best_i + 1 == n { m2 } else { grid_x(best_i + 1) };
            let (x, fx) = golden_section(objective, a, b, 1e-10 * m_best.max(1.0));
            if fx < best_f {
                m_best = x;
            }
        }
        let inner = self.solve_inner(alpha, m_best)?;
        let (rate, aoi) = inner.pmf.rate_aoi();
        Ok(OuterSolution {
            point: TradeoffPoint {
                rate,
                aoi,
                params: PolicyParams::GeneralEtatp { pmf: inner.pmf.clone() },
            },
            inner,
        })
    }

    /// Largest rate of the truncated class, `max_P H(V|τ)/E[T]`, and the
    /// corresponding law (identical geometric rows).
    pub fn max_rate(&self) -> Result<OuterSolution, EtatpError> {
        self.solve_outer(f64::INFINITY)
    }

    /// `max_P H(P) - r E[x]` (nats) is `Σ_t w_t ln Z_t` at `b = 0`, `a = r`.
    fn rate_slack(&self, r_nats: f64) -> f64 {
        self.lattice.gibbs(r_nats, 0.0, 1.0, None).log_z
    }

    /// Minimum AoI over the truncated class subject to rate ≥ `r` bits/slot.
    pub fn min_aoi_at_rate(&self, r: f64) -> Result<RateSolution, EtatpError> {
        if !r.is_finite() || r < 0.0 {
            return Err(EtatpError::InvalidInput(format!("rate floor {r}")));
        }
        let lat = &self.lattice;
        if r == 0.0 {
            return Ok(self.min_aoi_deterministic());
        }
        let r_nats = r * LN_2;
        let slack = self.rate_slack(r_nats);
        if slack < -1e-13 {
            let r_star = self.max_rate().map(|s| s.point.rate).unwrap_or(f64::NAN);
            return Err(EtatpError::RateAboveMax { r, r_star });
        }
        if slack <= 1e-13 {
            // Only the rate-maximizing law meets the floor.
            let mut rows = Vec::new();
            lat.gibbs(r_nats, 0.0, 1.0, Some(&mut rows));
            let pmf = self.pmf_from_rows(rows);
            let (rate, aoi) = pmf.rate_aoi();
            return Ok(RateSolution {
                point: TradeoffPoint { rate, aoi, params: PolicyParams::GeneralEtatp { pmf } },
                aoi_lower_bound: aoi,
                tau_tail: lat.tail,
                iterations: 0,
            });
        }

        let scale = lat.mean_min;
        // Gibbs parameters for inverse temperature β at Dinkelbach level α.
        let params = |alpha: f64, beta: f64| (scale * (r_nats - 2.0 * alpha * beta), scale * scale * beta);
        // f(β) = r E[x] - H, increasing in β; root gives the optimal multiplier 1/β.
        let f = |alpha: f64, beta: f64| {
            let (a, b) = params(alpha, beta);
            let s = lat.gibbs(a, b, scale, None);
            (r_nats * scale * s.m1 - s.entropy, s)
        };

        let mut alpha = 0.5 * lat.mean_min;
        let mut best: Option<(f64, f64, f64)> = None; // (alpha, beta, ratio)
        let mut lower_bound = 0.0;
        let mut iterations = 0;
        let mut beta_guess = 1.0;
        for _ in 0..100 {
            iterations += 1;
            let beta = self.find_beta(|b| f(alpha, b).0, beta_guess)?;
            beta_guess = beta;
            let (a, b) = params(alpha, beta);
            let s = lat.gibbs(a, b, scale, None);
            let ex = scale * s.m1;
            let ex2 = scale * scale * s.m2;
            let ratio = ex2 / (2.0 * ex);
            // Dual value: -(1/β) Σ w ln Z.
            let phi = -s.log_z / beta;
            lower_bound = alpha + phi.min(0.0) / (2.0 * lat.mean_min);
            let improved = best.is_none_or(|(_, _, r0)| ratio < r0);
            if improved {
                best = Some((alpha, beta, ratio));
            }
            if (alpha - ratio).abs() <= 1e-14 * ratio || (!improved && iterations > 2) {
                break;
            }
            alpha = ratio;
        }
        let (alpha_b, beta_b, _) = best.expect("at least one Dinkelbach step");
        let (a, b) = params(alpha_b, beta_b);
        let mut rows = Vec::new();
        lat.gibbs(a, b, scale, Some(&mut rows));
        let pmf = self.pmf_from_rows(rows);
        let (rate, aoi) = pmf.rate_aoi();
        Ok(RateSolution {
            point: TradeoffPoint { rate, aoi, params: PolicyParams::GeneralEtatp { pmf } },
            aoi_lower_bound: lower_bound.min(aoi),
            tau_tail: lat.tail,
            iterations,
        })
    }

    /// Root of the increasing function `f(β)` on `β > 0`, searched in `ln β`.
    fn find_beta<F: Fn(f64) -> f64>(&self, f: F, guess: f64) -> Result<f64, EtatpError> {
        let (mut lo, mut hi) = (guess.ln(), guess.ln());
        let mut f_lo = f(lo.exp());
        let mut f_hi = f_lo;
        let mut n = 0;
        while f_lo > 0.0 {
            lo -= 2.0;
            f_lo = f(lo.exp());
            n += 1;
            if n > 400 {
                return Err(EtatpError::NonConvergence { iterations: n, gap: f64::INFINITY, residual: f_lo });
            }
        }
        while f_hi < 0.0 {
            hi += 2.0;
            f_hi = f(hi.exp());
            n += 1;
            if n > 400 {
                return Err(EtatpError::NonConvergence { iterations: n, gap: f64::INFINITY, residual: f_hi });
            }
        }
        // Illinois regula falsi; the root side with f ≥ 0 is feasible (rate ≥ r).
        let mut side = 0i8;
        for _ in 0..200 {
            if f_hi == 0.0 || hi - lo <= 1e-15 * hi.abs().max(1.0) {
                break;
            }
            let mut x = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
            if !(x > lo && x < hi) {
                x = 0.5 * (lo + hi);
            }
            let fx = f(x.exp());
            if fx >= 0.0 {
                hi = x;
                f_hi = fx;
                if side == 1 {
                    f_lo *= 0.5;
                }
                side = 1;
            } else {
                lo = x;
                f_lo = fx;
                if side == -1 {
                    f_hi *= 0.5;
                }
                side = -1;
            }
            if f_hi.abs() <= 1e-15 {
                break;
            }
        }
        Ok(hi.exp())
    }

    /// Rate floor zero: deterministic per-row waits, Dinkelbach on `x² - 2αx`.
    fn min_aoi_deterministic(&self) -> RateSolution {
        let lat = &self.lattice;
        let mut alpha = 0.5 * lat.mean_min;
        let mut xs = lat.clamp_choice(alpha);
        let mut iterations = 0;
        for _ in 0..1000 {
            iterations += 1;
            let cand = lat.clamp_choice(alpha);
            let (m1, m2) = lat.choice_moments(&cand);
            let ratio = m2 / (2.0 * m1);
            xs = cand;
            if (ratio - alpha).abs() <= 1e-15 * ratio {
                break;
            }
            alpha = ratio;
        }
        let pmf = self.deterministic_pmf(&xs);
        let (rate, aoi) = pmf.rate_aoi();
        RateSolution {
            point: TradeoffPoint { rate, aoi, params: PolicyParams::GeneralEtatp { pmf } },
            aoi_lower_bound: aoi,
            tau_tail: lat.tail,
            iterations,
        }
    }

    pub fn truncation(&self) -> Truncation {
        self.lattice.trunc()
    }
}

pub fn solve_inner(
    model: &ArrivalModel,
    alpha: f64,
    m: f64,
    trunc: Truncation,
    eps: f64,
) -> Result<InnerSolution, EtatpError> {
    let opts = EtatpOptions::default_for(model).with_trunc(trunc);
    EtatpSolver::new(*model, EtatpOptions { eps, ..opts })?.solve_inner(alpha, m)
}

pub fn solve_outer(model: &ArrivalModel, alpha: f64, trunc: Truncation, eps: f64) -> Result<OuterSolution, EtatpError> {
    let opts = EtatpOptions::default_for(model).with_trunc(trunc);
    EtatpSolver::new(*model, EtatpOptions { eps, ..opts })?.solve_outer(alpha)
}

/// One `R(α)` point per grid value. Failed points are recorded in the
/// metadata; the curve keeps the minimal-AoI frontier of the rest.
pub fn etatp_curve(model: &ArrivalModel, alpha_grid: &[f64], trunc: Truncation, eps: f64) -> Result<TradeoffCurve, EtatpError> {
    if alpha_grid.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(EtatpError::InvalidInput("alpha grid must be sorted ascending".into()));
    }
    let opts = EtatpOptions { eps, ..EtatpOptions::default_for(model).with_trunc(trunc) };
    let solver = EtatpSolver::new(*model, opts)?;
    let mut meta = CurveMetadata::for_etatp(trunc, eps);
    let mut points = Vec::new();
    for &alpha in alpha_grid {
        match solver.solve_outer(alpha) {
            Ok(sol) => points.push(sol.point),
            Err(e) => meta.failures.push(format!("alpha={alpha}: {e}")),
        }
    }
    let mut curve = TradeoffCurve::new(*model, PolicyKind::GeneralEtatp, meta);
    curve.set_frontier(points);
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(q: f64) -> ArrivalModel {
        ArrivalModel::new(q).unwrap()
    }

    #[test]
    fn default_truncation_bounds_tails() {
        let m = model(0.2);
        let t = Truncation::default_for(&m);
        assert!(m.survival(t.tau_max) < DEFAULT_TAIL);
        let (_, p) = max_rate_zero_wait(&m);
        assert!((1.0 - p).powf(t.v_max as f64) < DEFAULT_TAIL);
        assert_eq!(Truncation::default_for(&model(1.0)).tau_max, 1);
    }

    #[test]
    fn pmf_validation() {
        let m = model(0.5);
        assert!(ConditionalPmf::new(&m, Truncation::new(2, 1), vec![0.5, 0.5, 1.0, 0.0]).is_ok());
        assert!(ConditionalPmf::new(&m, Truncation::new(2, 1), vec![0.5, 0.6, 1.0, 0.0]).is_err());
        assert!(ConditionalPmf::new(&m, Truncation::new(2, 1), vec![1.5, -0.5, 1.0, 0.0]).is_err());
        assert!(ConditionalPmf::new(&m, Truncation::new(2, 1), vec![1.0, 0.0]).is_err());
        let pmf = ConditionalPmf::new(&m, Truncation::new(3, 0), vec![1.0; 3]).unwrap();
        let w: f64 = pmf.tau_weights().iter().sum();
        assert!((w - 1.0).abs() < 1e-12);
        assert!((pmf.tau_tail() - 0.125).abs() < 1e-15);
    }

    #[test]
    fn min_second_moment_is_exact_on_small_lattice() {
        // q=1: single row x ∈ {1,2,3}; mean 1.5 is a 50/50 mix of 1 and 2.
        let lat = Lattice::new(&model(1.0), Truncation::new(1, 2));
        assert!((lat.min_second_moment(1.5).unwrap() - 2.5).abs() < 1e-12);
        assert!((lat.min_second_moment(2.0).unwrap() - 4.0).abs() < 1e-12);
        assert!(lat.min_second_moment(0.5).is_none());
        assert!(lat.min_second_moment(3.5).is_none());
    }

    #[test]
    fn forced_row_instance() {
        let sol = solve_inner(&model(1.0), 100.0, 1.5, Truncation::new(1, 1), 1e-8).unwrap();
        assert!((sol.pmf.row(1)[0] - 0.5).abs() < 1e-10);
        assert!((sol.objective - 2.0 / 3.0).abs() < 1e-10);
        assert!((sol.objective - sol.entropy_bits / sol.m).abs() < 1e-12);
        assert!(sol.duality_gap_bound <= 1e-8);
    }

    #[test]
    fn infeasible_and_invalid_inputs_are_distinct() {
        let m = model(1.0);
        let t = Truncation::new(1, 1);
        // m=1.9 needs E[T²] = 1 + 3·0.9 = 3.7 > 2·0.9·1.9.
        let err = solve_inner(&m, 0.9, 1.9, t, 1e-8).unwrap_err();
        assert!(matches!(err, EtatpError::Infeasible { .. }), "{err:?}");
        let err = solve_inner(&m, 10.0, 2.5, t, 1e-8).unwrap_err();
        assert!(matches!(err, EtatpError::Infeasible { .. }));
        assert!(matches!(solve_inner(&m, -1.0, 1.5, t, 1e-8), Err(EtatpError::InvalidInput(_))));
    }

    #[test]
    fn outer_boundary_reported() {
        let m = model(0.5);
        let err = solve_outer(&m, 1.0, Truncation::default_for(&m), 1e-8).unwrap_err();
        assert!(matches!(err, EtatpError::Boundary { .. }));
        // Below the minimum achievable AoI but above 1/(2q): no feasible m.
        let err = solve_outer(&m, 1.2, Truncation::default_for(&m), 1e-8).unwrap_err();
        assert!(matches!(err, EtatpError::NoFeasibleM { .. }), "{err:?}");
    }

    #[test]
    fn constrained_inner_meets_constraints() {
        let m = model(0.5);
        let solver = EtatpSolver::new(m, EtatpOptions::default_for(&m)).unwrap();
        let sol = solver.solve_inner(2.0, 2.8).unwrap();
        let cm = sol.pmf.cycle_moments();
        assert!((cm.mean_t - 2.8).abs() < 1e-10);
        assert!(cm.second_t <= 2.0 * 2.0 * 2.8 * (1.0 + 1e-10));
        assert!(sol.duality_gap_bound <= 1e-8);
        assert!(sol.second_moment_multiplier > 0.0, "AoI constraint should bind here");
        // Loosening the AoI constraint cannot lower the optimum.
        let loose = solver.solve_inner(3.0, 2.8).unwrap();
        assert!(loose.entropy_bits >= sol.entropy_bits - 1e-9);
    }

    #[test]
    fn rate_floor_zero_recovers_threshold_policy() {
        let m = model(0.5);
        let solver = EtatpSolver::new(m, EtatpOptions::default_for(&m)).unwrap();
        let sol = solver.min_aoi_at_rate(0.0).unwrap();
        let mut best = f64::INFINITY;
        for tau0 in 0..50 {
            let (ez, ez2) = crate::policies::threshold_moments(&m, tau0);
            best = best.min(ez2 / (2.0 * ez));
        }
        // The truncated arrival law shifts the optimum by about the tail mass.
        assert!((sol.point.aoi - best).abs() < 1e-7, "{} vs {best}", sol.point.aoi);
        assert_eq!(sol.point.rate, 0.0);
    }

    #[test]
    fn min_aoi_at_rate_is_feasible_and_certified() {
        let m = model(0.5);
        let solver = EtatpSolver::new(m, EtatpOptions::default_for(&m)).unwrap();
        let sol = solver.min_aoi_at_rate(0.4).unwrap();
        assert!(sol.point.rate >= 0.4 - 1e-9, "{}", sol.point.rate);
        assert!(sol.point.aoi <= 1.7);
        assert!(sol.point.aoi - sol.aoi_lower_bound <= 1e-9);
        assert!(matches!(solver.min_aoi_at_rate(0.8), Err(EtatpError::RateAboveMax { .. })));
    }

    #[test]
    fn curve_rejects_unsorted_grid() {
        let m = model(0.5);
        assert!(etatp_curve(&m, &[3.0, 2.0], Truncation::default_for(&m), 1e-8).is_err());
    }
}
