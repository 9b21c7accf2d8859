//! Tradeoff curves: construction over a rate grid, the minimal-AoI frontier
//! envelope, cross-policy dominance, and file output.

pub mod csv;
pub mod svg;

use rayon::prelude::*;
use thiserror::Error;

use crate::etatp::{EtatpError, EtatpOptions, EtatpSolver, Truncation};
use crate::policies::{PolicyKind, TradeoffPoint};
use crate::search::{
    max_rate_zero_wait, optimize_simplified_with, optimize_threshold_with, optimize_zero_wait_with, SearchError,
    SearchSpec,
};
use crate::stochastics::ArrivalModel;

/// Relative AoI gap under which two curves are considered overlapping.
pub const PLOT_TOLERANCE: f64 = 0.02;
/// Slack allowed on the ETATP containment check.
pub const ETATP_CONTAINMENT_TOL: f64 = 1e-6;
/// Slack allowed on the separable containment checks.
pub const SEPARABLE_CONTAINMENT_TOL: f64 = 1e-9;

pub const DEFAULT_RATE_POINTS: usize = 40;
pub const DEFAULT_RATE_FRACTION: f64 = 0.98;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum RegionError {
    #[error("curves do not share a model and rate grid: {0}")]
    MismatchedGrids(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Etatp(#[from] EtatpError),
    #[error("nothing to plot")]
    Empty,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveMetadata {
    pub truncation: Option<Truncation>,
    pub eps: Option<f64>,
    pub refine_tol: Option<f64>,
    pub tool_version: String,
    /// Grid points that could not be solved, with the reason.
    pub failures: Vec<String>,
}

impl CurveMetadata {
    pub fn new() -> Self {
        Self {
            truncation: None,
            eps: None,
            refine_tol: None,
            tool_version: TOOL_VERSION.to_string(),
            failures: Vec::new(),
        }
    }

    pub fn for_etatp(trunc: Truncation, eps: f64) -> Self {
        Self {
            truncation: Some(trunc),
            eps: Some(eps),
            ..Self::new()
        }
    }
}

impl Default for CurveMetadata {
    fn default() -> Self {
        Self::new()
    }
}

/// Points sorted strictly by rate with nondecreasing AoI.
#[derive(Debug, Clone, PartialEq)]
pub struct TradeoffCurve {
    pub model: ArrivalModel,
    pub policy_kind: PolicyKind,
    pub points: Vec<TradeoffPoint>,
    pub metadata: CurveMetadata,
}

impl TradeoffCurve {
    pub fn new(model: ArrivalModel, policy_kind: PolicyKind, metadata: CurveMetadata) -> Self {
        Self {
            model,
            policy_kind,
            points: Vec::new(),
            metadata,
        }
    }

    /// Installs `points` as the minimal-AoI frontier: sorted by rate, one
    /// point per rate, and AoI at rate `r` replaced by the best AoI at any
    /// rate `≥ r` (a policy meeting a higher floor meets every lower one).
    pub fn set_frontier(&mut self, mut points: Vec<TradeoffPoint>) {
        points.sort_by(|a, b| a.rate.total_cmp(&b.rate).then(a.aoi.total_cmp(&b.aoi)));
        points.dedup_by(|later, earlier| later.rate == earlier.rate);
        for i in (0..points.len().saturating_sub(1)).rev() {
            if points[i + 1].aoi < points[i].aoi {
                points[i].aoi = points[i + 1].aoi;
                points[i].params = points[i + 1].params.clone();
            }
        }
        self.points = points;
    }

    pub fn rates(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.rate).collect()
    }

    pub fn is_frontier(&self) -> bool {
        self.points
            .windows(2)
            .all(|w| w[0].rate < w[1].rate && w[0].aoi <= w[1].aoi)
    }
}

/// `n` evenly spaced rates in `[0, fraction·r*(q)]`.
pub fn default_rate_grid(model: &ArrivalModel, n: usize, fraction: f64) -> Vec<f64> {
    let (r_star, _) = max_rate_zero_wait(model);
    let top = fraction * r_star;
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|i| top * i as f64 / (n - 1) as f64).collect(),
    }
}

#[derive(Debug, Clone)]
pub struct RegionOptions {
    /// Grid and tolerance settings; the rate floor is overwritten per point.
    pub search: SearchSpec,
    /// `None` uses [`EtatpOptions::default_for`].
    pub etatp: Option<EtatpOptions>,
}

impl Default for RegionOptions {
    fn default() -> Self {
        Self {
            search: SearchSpec::new(0.0),
            etatp: None,
        }
    }
}

#[derive(Debug, Error)]
enum PointError {
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Etatp(#[from] EtatpError),
}

/// Minimum AoI at each rate floor in `r_grid` for one policy class.
///
/// Each point's `rate` is its grid floor; the attached parameters achieve at
/// least that rate. Grid points run in parallel and are merged by index.
pub fn build_region(
    model: &ArrivalModel,
    kind: PolicyKind,
    r_grid: &[f64],
    opts: &RegionOptions,
) -> Result<TradeoffCurve, RegionError> {
    let mut meta = CurveMetadata::new();
    meta.refine_tol = Some(opts.search.refine_tol);
    let solver = if kind == PolicyKind::GeneralEtatp {
        let eo = opts.etatp.unwrap_or_else(|| EtatpOptions::default_for(model));
        meta.truncation = Some(eo.trunc);
        meta.eps = Some(eo.eps);
        Some(EtatpSolver::new(*model, eo)?)
    } else {
        None
    };

    let results: Vec<Result<TradeoffPoint, PointError>> = r_grid
        .par_iter()
        .map(|&r| {
            let spec = SearchSpec {
                rate_floor: r,
                ..opts.search.clone()
            };
            let mut pt = match kind {
                PolicyKind::ZeroWait => optimize_zero_wait_with(model, &spec)?,
                PolicyKind::Threshold => optimize_threshold_with(model, &spec)?,
                PolicyKind::SimplifiedEtatp => optimize_simplified_with(model, &spec)?,
                PolicyKind::GeneralEtatp => solver.as_ref().expect("solver built").min_aoi_at_rate(r)?.point,
            };
            pt.rate = r;
            Ok(pt)
        })
        .collect();

    let mut points = Vec::with_capacity(results.len());
    for (r, res) in r_grid.iter().zip(results) {
        match res {
            Ok(pt) => points.push(pt),
            Err(e) => meta.failures.push(format!("r={r}: {e}")),
        }
    }
    let mut curve = TradeoffCurve::new(*model, kind, meta);
    curve.set_frontier(points);
    Ok(curve)
}

/// Largest AoI excess of `better` over `worse` on a shared grid, and the
/// largest relative gap between them.
#[derive(Debug, Clone, PartialEq)]
pub struct PairComparison {
    pub better: PolicyKind,
    pub worse: PolicyKind,
    /// Whether `better ≤ worse` is a class-containment guarantee.
    pub expected: bool,
    pub tolerance: f64,
    /// `max_r (aoi_better(r) - aoi_worse(r))`; positive means a violation.
    pub max_violation: f64,
    /// `max_r |aoi_better - aoi_worse| / min(aoi_better, aoi_worse)`.
    pub max_relative_gap: f64,
}

impl PairComparison {
    pub fn holds(&self) -> bool {
        self.max_violation <= self.tolerance
    }

    pub fn overlaps(&self) -> bool {
        self.max_relative_gap < PLOT_TOLERANCE
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DominanceReport {
    pub q: f64,
    pub rates: Vec<f64>,
    pub kinds: Vec<PolicyKind>,
    /// `aoi[k][i]`: AoI of `kinds[k]` at `rates[i]`.
    pub aoi: Vec<Vec<f64>>,
    pub comparisons: Vec<PairComparison>,
    /// True if zero-wait is weakly dominated by every other policy present.
    pub zero_wait_worst: bool,
}

impl DominanceReport {
    pub fn pair(&self, better: PolicyKind, worse: PolicyKind) -> Option<&PairComparison> {
        self.comparisons.iter().find(|c| c.better == better && c.worse == worse)
    }

    /// Largest relative gap between two policies, in either order.
    pub fn gap(&self, a: PolicyKind, b: PolicyKind) -> Option<f64> {
        self.pair(a, b).or_else(|| self.pair(b, a)).map(|c| c.max_relative_gap)
    }

    pub fn containments_hold(&self) -> bool {
        self.comparisons.iter().filter(|c| c.expected).all(|c| c.holds())
    }
}

fn containment(better: PolicyKind, worse: PolicyKind) -> Option<f64> {
    use PolicyKind::*;
    match (better, worse) {
        (GeneralEtatp, b) if b != GeneralEtatp => Some(ETATP_CONTAINMENT_TOL),
        (SimplifiedEtatp, ZeroWait) | (Threshold, ZeroWait) => Some(SEPARABLE_CONTAINMENT_TOL),
        _ => None,
    }
}

/// Pointwise comparison of curves that share a model and rate grid.
pub fn dominance_report(curves: &[TradeoffCurve]) -> Result<DominanceReport, RegionError> {
    let Some(first) = curves.first() else {
        return Err(RegionError::MismatchedGrids("no curves".into()));
    };
    let rates = first.rates();
    for c in &curves[1..] {
        if c.model != first.model {
            return Err(RegionError::MismatchedGrids(format!(
                "q = {} vs q = {}",
                first.model.q(),
                c.model.q()
            )));
        }
        if c.rates() != rates {
            return Err(RegionError::MismatchedGrids(format!(
                "{} has {} points, {} has {}",
                first.policy_kind,
                rates.len(),
                c.policy_kind,
                c.points.len()
            )));
        }
    }
    let kinds: Vec<PolicyKind> = curves.iter().map(|c| c.policy_kind).collect();
    let aoi: Vec<Vec<f64>> = curves.iter().map(|c| c.points.iter().map(|p| p.aoi).collect()).collect();

    let mut comparisons = Vec::new();
    for i in 0..curves.len() {
        for j in 0..curves.len() {
            if i == j {
                continue;
            }
            let expected = containment(kinds[i], kinds[j]);
            // Unexpected pairs are listed once, in index order.
            if expected.is_none() && (i > j || containment(kinds[j], kinds[i]).is_some()) {
                continue;
            }
            let mut max_violation = f64::NEG_INFINITY;
            let mut max_rel = 0.0f64;
            for (a, b) in aoi[i].iter().zip(&aoi[j]) {
                max_violation = max_violation.max(a - b);
                max_rel = max_rel.max((a - b).abs() / a.min(*b));
            }
            comparisons.push(PairComparison {
                better: kinds[i],
                worse: kinds[j],
                expected: expected.is_some(),
                tolerance: expected.unwrap_or(0.0),
                max_violation: if rates.is_empty() { 0.0 } else { max_violation },
                max_relative_gap: max_rel,
            });
        }
    }

    let zero_wait_worst = match kinds.iter().position(|&k| k == PolicyKind::ZeroWait) {
        None => true,
        Some(zi) => (0..curves.len())
            .filter(|&k| k != zi)
            .all(|k| aoi[k].iter().zip(&aoi[zi]).all(|(o, z)| *o <= z + ETATP_CONTAINMENT_TOL)),
    };

    Ok(DominanceReport {
        q: first.model.q(),
        rates,
        kinds,
        aoi,
        comparisons,
        zero_wait_worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policies::PolicyParams;

    fn model(q: f64) -> ArrivalModel {
        ArrivalModel::new(q).unwrap()
    }

    fn pt(rate: f64, aoi: f64) -> TradeoffPoint {
        TradeoffPoint {
            rate,
            aoi,
            params: PolicyParams::ZeroWait { p: aoi / 10.0 },
        }
    }

    #[test]
    fn frontier_envelope() {
        let mut c = TradeoffCurve::new(model(0.5), PolicyKind::ZeroWait, CurveMetadata::new());
        c.set_frontier(vec![pt(0.2, 3.0), pt(0.0, 2.0), pt(0.1, 2.5), pt(0.1, 2.4), pt(0.3, 2.9)]);
        assert_eq!(c.rates(), vec![0.0, 0.1, 0.2, 0.3]);
        let aoi: Vec<f64> = c.points.iter().map(|p| p.aoi).collect();
        assert_eq!(aoi, vec![2.0, 2.4, 2.9, 2.9]);
        assert!(c.is_frontier());
    }

    #[test]
    fn zero_wait_single_point_region() {
        let c = build_region(&model(0.5), PolicyKind::ZeroWait, &[0.0], &RegionOptions::default()).unwrap();
        assert_eq!(c.points.len(), 1);
        assert_eq!((c.points[0].rate, c.points[0].aoi), (0.0, 1.5));
    }

    #[test]
    fn empty_grid_gives_empty_curve() {
        for kind in PolicyKind::ALL {
            let c = build_region(&model(0.5), kind, &[], &RegionOptions::default()).unwrap();
            assert!(c.points.is_empty());
            assert!(c.metadata.failures.is_empty());
            assert_eq!(c.metadata.tool_version, TOOL_VERSION);
        }
    }

    #[test]
    fn infeasible_grid_points_are_recorded() {
        let c = build_region(&model(0.5), PolicyKind::ZeroWait, &[0.1, 5.0], &RegionOptions::default()).unwrap();
        assert_eq!(c.points.len(), 1);
        assert_eq!(c.metadata.failures.len(), 1);
    }

    #[test]
    fn default_grid_shape() {
        let g = default_rate_grid(&model(0.5), 40, 0.98);
        assert_eq!(g.len(), 40);
        assert_eq!(g[0], 0.0);
        let (r_star, _) = max_rate_zero_wait(&model(0.5));
        assert!((g[39] - 0.98 * r_star).abs() < 1e-15);
    }

    #[test]
    fn dominance_single_curve_is_trivial() {
        let c = build_region(&model(0.5), PolicyKind::ZeroWait, &[0.0, 0.3], &RegionOptions::default()).unwrap();
        let rep = dominance_report(&[c]).unwrap();
        assert!(rep.comparisons.is_empty());
        assert!(rep.zero_wait_worst);
    }

    #[test]
    fn dominance_rejects_mismatched_grids() {
        let o = RegionOptions::default();
        let a = build_region(&model(0.5), PolicyKind::ZeroWait, &[0.0, 0.3], &o).unwrap();
        let b = build_region(&model(0.5), PolicyKind::Threshold, &[0.0, 0.2], &o).unwrap();
        assert!(matches!(dominance_report(&[a.clone(), b]), Err(RegionError::MismatchedGrids(_))));
        let c = build_region(&model(0.6), PolicyKind::Threshold, &[0.0, 0.3], &o).unwrap();
        assert!(dominance_report(&[a, c]).is_err());
        assert!(dominance_report(&[]).is_err());
    }

    #[test]
    fn separable_containment_on_shared_grid() {
        let m = model(0.3);
        let grid = default_rate_grid(&m, 8, 0.98);
        let o = RegionOptions::default();
        let curves: Vec<_> = [PolicyKind::ZeroWait, PolicyKind::Threshold]
            .iter()
            .map(|&k| build_region(&m, k, &grid, &o).unwrap())
            .collect();
        let rep = dominance_report(&curves).unwrap();
        assert!(rep.containments_hold());
        assert!(rep.zero_wait_worst);
        assert!(rep.pair(PolicyKind::Threshold, PolicyKind::ZeroWait).unwrap().expected);
    }
}
