//! Command-line front end. [`run_cli`] never exits the process; it returns
//! the exit code and writes to the supplied streams.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{parse_f64_list, parse_policy_list, ConfigError, OutputFormat, RunConfig};
use crate::etatp::{EtatpError, EtatpOptions, EtatpSolver, Truncation};
use crate::policies::{cycle_moments, evaluate, PolicyKind, PolicyParams, TradeoffPoint};
use crate::region::csv::{curves_to_string, emit_csv, fmt_f64, report_to_string};
use crate::region::svg::{emit_svg, SvgStyle};
use crate::region::{build_region, default_rate_grid, dominance_report, RegionError, RegionOptions, TradeoffCurve};
use crate::search::{max_rate_zero_wait, SearchSpec};
use crate::simulator::{empirical_rate, simulate, SimReport};
use crate::stochastics::ArrivalModel;
use crate::validation::{formula_suite, reduction_suite, simulation_suite};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Numerical(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Numerical(m) => m,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<RegionError> for CliError {
    fn from(e: RegionError) -> Self {
        match e {
            RegionError::Io { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<EtatpError> for CliError {
    fn from(e: EtatpError) -> Self {
        match e {
            EtatpError::InvalidInput(_) => CliError::Usage(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Usage(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "aoi-tradeoff", version, about = "Rate versus age-of-information tradeoffs for energy-harvesting timing channels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate rate and AoI of one policy.
    Point(PolicyArgs),
    /// Minimum AoI over a rate grid for one policy class.
    Curve(CurveArgs),
    /// Compare policy classes on a shared rate grid.
    Compare(CompareArgs),
    /// Monte Carlo simulation of one policy.
    Simulate(SimulateArgs),
    /// Closed forms against the series oracle and simulation.
    Validate(ValidateArgs),
    /// Tradeoff curves, plots and dominance reports for several arrival rates.
    Figures(FiguresArgs),
}

#[derive(Debug, Args)]
struct PolicyArgs {
    /// zero-wait, threshold, simplified-etatp or etatp.
    #[arg(long)]
    policy: PolicyKind,
    /// Energy arrival probability per slot.
    #[arg(long)]
    q: f64,
    /// Geometric delay parameter (zero-wait, threshold).
    #[arg(long)]
    p: Option<f64>,
    /// Waiting threshold (threshold).
    #[arg(long)]
    tau0: Option<u64>,
    /// Regime boundary (simplified-etatp).
    #[arg(long)]
    c: Option<u64>,
    /// Delay parameter when τ ≤ c (simplified-etatp).
    #[arg(long)]
    p_low: Option<f64>,
    /// Delay parameter when τ > c (simplified-etatp).
    #[arg(long)]
    p_high: Option<f64>,
    /// Solve the ETATP policy of minimum AoI at this rate floor (etatp).
    #[arg(long, conflicts_with = "alpha")]
    rate: Option<f64>,
    /// Solve the ETATP policy of maximum rate with AoI at most alpha (etatp).
    #[arg(long)]
    alpha: Option<f64>,
    #[command(flatten)]
    trunc: TruncArgs,
}

#[derive(Debug, Args)]
struct TruncArgs {
    /// Largest arrival time kept in the ETATP support.
    #[arg(long)]
    tau_max: Option<u64>,
    /// Largest information delay in the ETATP support.
    #[arg(long)]
    v_max: Option<u64>,
    /// Duality-gap target for the ETATP solver, bits.
    #[arg(long)]
    eps: Option<f64>,
}

impl TruncArgs {
    fn options(&self, model: &ArrivalModel) -> Result<EtatpOptions, CliError> {
        let mut o = EtatpOptions::default_for(model);
        if let Some(t) = self.tau_max {
            o.trunc.tau_max = t;
        }
        if let Some(v) = self.v_max {
            o.trunc.v_max = v;
        }
        if let Some(e) = self.eps {
            if !(e > 0.0) {
                return Err(CliError::Usage("--eps must be positive".into()));
            }
            o.eps = e;
        }
        if o.trunc.tau_max == 0 || o.trunc.v_max == 0 {
            return Err(CliError::Usage("--tau-max and --v-max must be at least 1".into()));
        }
        Ok(o)
    }
}

#[derive(Debug, Args)]
struct CurveArgs {
    #[arg(long)]
    policy: PolicyKind,
    #[arg(long)]
    q: f64,
    /// Number of grid rates.
    #[arg(long, default_value_t = 40)]
    points: usize,
    /// Top of the grid as a fraction of the maximum zero-wait rate.
    #[arg(long, default_value_t = 0.98)]
    fraction: f64,
    /// Write CSV here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write an SVG plot.
    #[arg(long)]
    svg: Option<PathBuf>,
    #[command(flatten)]
    trunc: TruncArgs,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[arg(long)]
    q: f64,
    /// Comma-separated policy list, or `all`.
    #[arg(long, default_value = "all")]
    policies: String,
    #[arg(long, default_value_t = 40)]
    points: usize,
    #[arg(long, default_value_t = 0.98)]
    fraction: f64,
    /// Write the curves CSV here.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    trunc: TruncArgs,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    policy: PolicyArgs,
    #[arg(long, default_value_t = 1_000_000)]
    cycles: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    /// Parameter draws per family for the formula check.
    #[arg(long, default_value_t = 1000)]
    draws: usize,
    /// Parameter draws per family for the simulation check.
    #[arg(long, default_value_t = 20)]
    sim_draws: usize,
    #[arg(long, default_value_t = 1_000_000)]
    cycles: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Debug, Args)]
struct FiguresArgs {
    /// Run configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated arrival probabilities.
    #[arg(long)]
    q: Option<String>,
    #[arg(long)]
    policies: Option<String>,
    #[arg(long)]
    rate_points: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    sim_cycles: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// csv, svg or both.
    #[arg(long)]
    format: Option<String>,
}

fn model(q: f64) -> Result<ArrivalModel, CliError> {
    ArrivalModel::new(q).map_err(|e| CliError::Usage(format!("--q: {e}")))
}

fn need<T>(v: Option<T>, flag: &str, policy: PolicyKind) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::Usage(format!("--{flag} is required for --policy {policy}")))
}

/// Resolves the policy flags to parameters, solving for ETATP.
fn resolve_policy(a: &PolicyArgs, m: &ArrivalModel) -> Result<PolicyParams, CliError> {
    let k = a.policy;
    let params = match k {
        PolicyKind::ZeroWait => PolicyParams::ZeroWait { p: need(a.p, "p", k)? },
        PolicyKind::Threshold => PolicyParams::Threshold {
            tau0: need(a.tau0, "tau0", k)?,
            p: need(a.p, "p", k)?,
        },
        PolicyKind::SimplifiedEtatp => PolicyParams::SimplifiedEtatp {
            c: need(a.c, "c", k)?,
            p_low: need(a.p_low, "p-low", k)?,
            p_high: need(a.p_high, "p-high", k)?,
        },
        PolicyKind::GeneralEtatp => {
            let solver = EtatpSolver::new(*m, a.trunc.options(m)?)?;
            let point = match (a.rate, a.alpha) {
                (Some(r), _) => solver.min_aoi_at_rate(r)?.point,
                (None, Some(alpha)) => solver.solve_outer(alpha)?.point,
                (None, None) => return Err(CliError::Usage("--rate or --alpha is required for --policy etatp".into())),
            };
            return Ok(point.params);
        }
    };
    params.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(params)
}

fn describe_params(params: &PolicyParams) -> String {
    params
        .named_values()
        .iter()
        .map(|(n, v)| format!("{n}={v}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn run_point(a: &PolicyArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let m = model(a.q)?;
    let params = resolve_policy(a, &m)?;
    let pt = evaluate(&m, &params).map_err(|e| CliError::Numerical(e.to_string()))?;
    let cm = cycle_moments(&m, &params).map_err(|e| CliError::Numerical(e.to_string()))?;
    let mut s = String::new();
    let _ = writeln!(s, "policy = {}", params.kind());
    let _ = writeln!(s, "q = {}", a.q);
    let _ = writeln!(s, "params = {}", describe_params(&params));
    let _ = writeln!(s, "rate = {}", pt.rate);
    let _ = writeln!(s, "aoi = {}", pt.aoi);
    let _ = writeln!(s, "mean_t = {}", cm.mean_t);
    let _ = writeln!(s, "second_t = {}", cm.second_t);
    let _ = writeln!(s, "entropy_bits = {}", cm.entropy_bits);
    out.write_all(s.as_bytes()).map_err(|e| CliError::Usage(e.to_string()))
}

fn region_options(m: &ArrivalModel, trunc: &TruncArgs) -> Result<RegionOptions, CliError> {
    Ok(RegionOptions {
        search: SearchSpec::new(0.0),
        etatp: Some(trunc.options(m)?),
    })
}

fn check_grid(points: usize, fraction: f64) -> Result<(), CliError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(CliError::Usage("--fraction must lie in (0, 1)".into()));
    }
    if points == 0 {
        return Err(CliError::Usage("--points must be at least 1".into()));
    }
    Ok(())
}

fn report_failures(curves: &[TradeoffCurve], err: &mut dyn Write) -> Result<(), CliError> {
    let mut any = false;
    for c in curves {
        for f in &c.metadata.failures {
            any = true;
            let _ = writeln!(err, "warning: {} at q = {}: {f}", c.policy_kind, c.model.q());
        }
    }
    if any && curves.iter().all(|c| c.points.is_empty()) {
        return Err(CliError::Numerical("no grid point could be solved".into()));
    }
    Ok(())
}

fn run_curve(a: &CurveArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let m = model(a.q)?;
    check_grid(a.points, a.fraction)?;
    let grid = default_rate_grid(&m, a.points, a.fraction);
    let curve = build_region(&m, a.policy, &grid, &region_options(&m, &a.trunc)?)?;
    report_failures(std::slice::from_ref(&curve), err)?;
    let curves = [curve];
    match &a.out {
        Some(p) => emit_csv(&curves, p)?,
        None => out.write_all(curves_to_string(&curves).as_bytes()).map_err(|e| CliError::Usage(e.to_string()))?,
    }
    if let Some(p) = &a.svg {
        let style = SvgStyle {
            title: Some(format!("q = {}", a.q)),
            ..SvgStyle::default()
        };
        emit_svg(&curves, p, &style)?;
    }
    Ok(())
}

fn format_report(report: &crate::region::DominanceReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "q = {}", report.q);
    let _ = writeln!(s, "grid points = {}", report.rates.len());
    for c in &report.comparisons {
        let rel = if c.expected { "<=" } else { "vs" };
        let status = if !c.expected {
            "info"
        } else if c.holds() {
            "ok"
        } else {
            "VIOLATED"
        };
        let _ = writeln!(
            s,
            "{} {rel} {}: max violation {:.3e}, max relative gap {:.4} ({}), {status}",
            c.better,
            c.worse,
            c.max_violation,
            c.max_relative_gap,
            if c.overlaps() { "overlap" } else { "gap" },
        );
    }
    let _ = writeln!(s, "zero-wait worst = {}", report.zero_wait_worst);
    s
}

fn run_compare(a: &CompareArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let m = model(a.q)?;
    check_grid(a.points, a.fraction)?;
    let kinds = parse_policy_list("--policies", &a.policies)?;
    let grid = default_rate_grid(&m, a.points, a.fraction);
    let opts = region_options(&m, &a.trunc)?;
    let curves = kinds
        .iter()
        .map(|&k| build_region(&m, k, &grid, &opts))
        .collect::<Result<Vec<_>, _>>()?;
    report_failures(&curves, err)?;
    if let Some(p) = &a.out {
        emit_csv(&curves, p)?;
    }
    let report = dominance_report(&curves)?;
    out.write_all(format_report(&report).as_bytes()).map_err(|e| CliError::Usage(e.to_string()))?;
    if !report.containments_hold() {
        return Err(CliError::Numerical("expected containment violated".into()));
    }
    Ok(())
}

fn format_sim_report(r: &SimReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "policy = {}", r.policy);
    let _ = writeln!(s, "q = {}", r.q);
    let _ = writeln!(s, "cycles = {}", r.n_cycles);
    let _ = writeln!(s, "seed = {}", r.seed);
    let _ = writeln!(s, "algorithm = {}", r.algorithm);
    let _ = writeln!(s, "aoi_hat = {} (se {}, {:?})", r.aoi_hat, r.se.aoi, r.se.aoi_method);
    let _ = writeln!(s, "mean_t_hat = {} (se {})", r.mean_t_hat, r.se.mean_t);
    let _ = writeln!(s, "second_t_hat = {} (se {})", r.second_t_hat, r.se.second_t);
    let _ = writeln!(s, "mean_v_hat = {} (se {})", r.mean_v_hat, r.se.mean_v);
    let _ = writeln!(s, "second_v_hat = {} (se {})", r.second_v_hat, r.se.second_v);
    let _ = writeln!(s, "cross_tau_v_hat = {} (se {})", r.cross_tau_v_hat, r.se.cross_tau_v);
    let _ = writeln!(s, "mean_z_hat = {} (se {})", r.mean_z_hat, r.se.mean_z);
    let _ = writeln!(s, "mean_tau_hat = {} (se {})", r.mean_tau_hat, r.se.mean_tau);
    let _ = writeln!(s, "clamped_cycles = {}", r.clamped_cycles);
    s
}

fn run_simulate(a: &SimulateArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let m = model(a.policy.q)?;
    let params = resolve_policy(&a.policy, &m)?;
    if a.cycles == 0 {
        return Err(CliError::Usage("--cycles must be at least 1".into()));
    }
    let report = simulate(&params, &m, a.cycles, a.seed).map_err(|e| CliError::Numerical(e.to_string()))?;
    let mut s = format_sim_report(&report);
    if let Ok(er) = empirical_rate(&report, &params) {
        let _ = writeln!(s, "rate_hat = {}", er.rate);
        for w in er.warnings {
            let _ = writeln!(err, "warning: {w}");
        }
    }
    if report.truncation_warning {
        let _ = writeln!(err, "warning: arrival times beyond the truncated support were clamped");
    }
    let pt = evaluate(&m, &params).map_err(|e| CliError::Numerical(e.to_string()))?;
    let _ = writeln!(s, "aoi_analytic = {}", pt.aoi);
    let _ = writeln!(s, "rate_analytic = {}", pt.rate);
    out.write_all(s.as_bytes()).map_err(|e| CliError::Usage(e.to_string()))
}

fn run_validate(a: &ValidateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let num = |e: crate::validation::ValidationError| CliError::Numerical(e.to_string());
    let mut ok = true;
    let mut s = String::new();
    for kind in [PolicyKind::ZeroWait, PolicyKind::Threshold, PolicyKind::SimplifiedEtatp] {
        let chk = formula_suite(kind, a.draws, a.seed, 1e-9).map_err(num)?;
        ok &= chk.passed();
        let _ = writeln!(
            s,
            "formula {kind}: {} draws, max rel err rate {:.2e}, aoi {:.2e}: {}",
            chk.draws,
            chk.max_rel_rate,
            chk.max_rel_aoi,
            pass(chk.passed())
        );
    }
    let red = reduction_suite(a.draws, a.seed).map_err(num)?;
    ok &= red <= 1e-12;
    let _ = writeln!(s, "reductions: max deviation {red:.2e}: {}", pass(red <= 1e-12));
    if a.sim_draws > 0 && a.cycles > 0 {
        for kind in PolicyKind::ALL {
            let chk = simulation_suite(kind, a.sim_draws, a.cycles, a.seed, 4.0).map_err(num)?;
            ok &= chk.passed();
            let _ = writeln!(
                s,
                "simulation {kind}: {}/{} draws within {} se: {}",
                chk.agreeing,
                chk.draws,
                chk.z_limit,
                pass(chk.passed())
            );
        }
    }
    out.write_all(s.as_bytes()).map_err(|e| CliError::Usage(e.to_string()))?;
    if ok {
        Ok(())
    } else {
        Err(CliError::Numerical("validation failed".into()))
    }
}

fn pass(b: bool) -> &'static str {
    if b {
        "PASS"
    } else {
        "FAIL"
    }
}

/// Files written by one `figures` run.
#[derive(Debug, Clone, PartialEq)]
pub struct FiguresOutput {
    pub files: Vec<PathBuf>,
    /// One dominance report per model, in configuration order.
    pub reports: Vec<crate::region::DominanceReport>,
}

fn curve_stem(q: f64) -> String {
    format!("tradeoff_q{q}")
}

/// Builds every configured curve, then writes per-model CSV and SVG files and
/// a plain-text summary. Output depends only on the configuration and the
/// tool version.
pub fn run_figures(cfg: &RunConfig) -> Result<FiguresOutput, CliError> {
    cfg.check()?;
    fs::create_dir_all(&cfg.out_dir).map_err(|e| io_err(&cfg.out_dir, e))?;
    let mut files = Vec::new();
    let mut reports = Vec::new();
    let mut summary = String::new();
    let _ = writeln!(summary, "tool version = {}", crate::region::TOOL_VERSION);
    let _ = writeln!(summary, "seed = {}", cfg.seed);

    for &q in &cfg.q_values {
        let m = model(q)?;
        let mut eo = EtatpOptions::default_for(&m);
        eo.trunc = Truncation::new(
            cfg.tau_max.unwrap_or(eo.trunc.tau_max),
            cfg.v_max.unwrap_or(eo.trunc.v_max),
        );
        eo.eps = cfg.eps;
        let opts = RegionOptions {
            search: SearchSpec {
                p_grid: cfg.p_grid,
                refine_tol: cfg.refine_tol,
                ..SearchSpec::new(0.0)
            },
            etatp: Some(eo),
        };
        let grid = default_rate_grid(&m, cfg.rate_points, cfg.rate_fraction);
        let curves = cfg
            .policies
            .iter()
            .map(|&k| build_region(&m, k, &grid, &opts))
            .collect::<Result<Vec<_>, _>>()?;

        let stem = curve_stem(q);
        if cfg.format.csv() {
            let p = cfg.out_dir.join(format!("{stem}.csv"));
            emit_csv(&curves, &p)?;
            files.push(p);
        }
        if cfg.format.svg() {
            let p = cfg.out_dir.join(format!("{stem}.svg"));
            let style = SvgStyle {
                title: Some(format!("Rate-AoI tradeoff, q = {q}")),
                ..SvgStyle::default()
            };
            emit_svg(&curves, &p, &style)?;
            files.push(p);
        }

        let (r_star, p_star) = max_rate_zero_wait(&m);
        let _ = writeln!(summary, "\n[q = {q}]");
        let _ = writeln!(summary, "max rate = {} at p = {}", fmt_f64(r_star), fmt_f64(p_star));
        for c in &curves {
            for f in &c.metadata.failures {
                let _ = writeln!(summary, "failure {}: {f}", c.policy_kind);
            }
        }
        let report = dominance_report(&curves)?;
        summary.push_str(&format_report(&report));
        summary.push_str(&report_to_string(&report));
        if cfg.sim_cycles > 0 {
            summary.push_str(&simulation_spot_check(&m, &curves, cfg.sim_cycles, cfg.seed)?);
        }
        reports.push(report);
    }
    let p = cfg.out_dir.join("summary.txt");
    fs::write(&p, summary).map_err(|e| io_err(&p, e))?;
    files.push(p);
    Ok(FiguresOutput { files, reports })
}

/// Simulates the middle frontier point of each curve.
fn simulation_spot_check(
    m: &ArrivalModel,
    curves: &[TradeoffCurve],
    cycles: u64,
    seed: u64,
) -> Result<String, CliError> {
    let mut s = String::from("policy,rate_floor,aoi_analytic,aoi_hat,aoi_se\n");
    for c in curves {
        let Some(TradeoffPoint { rate, params, .. }) = c.points.get(c.points.len() / 2) else {
            continue;
        };
        let analytic = evaluate(m, params).map_err(|e| CliError::Numerical(e.to_string()))?;
        let rep = simulate(params, m, cycles, seed).map_err(|e| CliError::Numerical(e.to_string()))?;
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            c.policy_kind,
            fmt_f64(*rate),
            fmt_f64(analytic.aoi),
            fmt_f64(rep.aoi_hat),
            fmt_f64(rep.se.aoi)
        );
    }
    Ok(s)
}

fn figures_config(a: &FiguresArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(q) = &a.q {
        cfg.q_values = parse_f64_list("--q", q)?;
    }
    if let Some(p) = &a.policies {
        cfg.policies = parse_policy_list("--policies", p)?;
    }
    if let Some(n) = a.rate_points {
        cfg.rate_points = n;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(n) = a.sim_cycles {
        cfg.sim_cycles = n;
    }
    if let Some(d) = &a.out_dir {
        cfg.out_dir = d.clone();
    }
    if let Some(f) = &a.format {
        cfg.format = match f.as_str() {
            "csv" => OutputFormat::Csv,
            "svg" => OutputFormat::Svg,
            "both" => OutputFormat::Both,
            _ => return Err(CliError::Usage("--format must be csv, svg or both".into())),
        };
    }
    cfg.check()?;
    Ok(cfg)
}

fn run_figures_cmd(a: &FiguresArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = figures_config(a)?;
    let res = run_figures(&cfg)?;
    let mut s = String::new();
    for f in &res.files {
        let _ = writeln!(s, "wrote {}", f.display());
    }
    out.write_all(s.as_bytes()).map_err(|e| CliError::Usage(e.to_string()))?;
    if res.reports.iter().all(|r| r.containments_hold()) {
        Ok(())
    } else {
        Err(CliError::Numerical("expected containment violated; see summary.txt".into()))
    }
}

/// Parses `argv` (including the program name) and runs the subcommand.
pub fn run_cli<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let rendered = e.render().to_string();
            if e.use_stderr() {
                let _ = err.write_all(rendered.as_bytes());
                return EXIT_USAGE;
            }
            let _ = out.write_all(rendered.as_bytes());
            return EXIT_OK;
        }
    };
    let res = match &cli.command {
        Command::Point(a) => run_point(a, out),
        Command::Curve(a) => run_curve(a, out, err),
        Command::Compare(a) => run_compare(a, out, err),
        Command::Simulate(a) => run_simulate(a, out, err),
        Command::Validate(a) => run_validate(a, out),
        Command::Figures(a) => run_figures_cmd(a, out),
    };
    match res {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message());
            e.code()
        }
    }
}
