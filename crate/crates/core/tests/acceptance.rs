//! End-to-end acceptance checks. Runs as a plain binary so that every
//! criterion prints one PASS/FAIL line; exits nonzero if any fails.

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use aoi_tradeoff::cli::run_figures;
use aoi_tradeoff::config::RunConfig;
use aoi_tradeoff::etatp::{tau_weights, EtatpOptions, EtatpSolver, Truncation};
use aoi_tradeoff::policies::PolicyKind;
use aoi_tradeoff::search::max_rate_zero_wait;
use aoi_tradeoff::stochastics::{binary_entropy, ArrivalModel};
use aoi_tradeoff::validation::{formula_suite, reduction_suite, simulation_suite};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn formula_validation() -> Outcome {
    let start = Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();
    for kind in [PolicyKind::ZeroWait, PolicyKind::Threshold, PolicyKind::SimplifiedEtatp] {
        let chk = formula_suite(kind, 1000, 2024, 1e-9).expect("oracle runs");
        ok &= chk.passed();
        parts.push(format!("{kind} {:.1e}/{:.1e}", chk.max_rel_rate, chk.max_rel_aoi));
    }
    let elapsed = start.elapsed();
    ok &= elapsed < Duration::from_secs(10);
    outcome(ok, format!("1000 draws each, max rel err rate/aoi: {}; {elapsed:.2?}", parts.join(", ")))
}

fn simulation_validation() -> Outcome {
    let start = Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();
    for kind in PolicyKind::ALL {
        let chk = simulation_suite(kind, 20, 1_000_000, 77, 4.0).expect("simulation runs");
        ok &= chk.passed();
        parts.push(format!("{kind} {}/20", chk.agreeing));
    }
    let elapsed = start.elapsed();
    ok &= elapsed < Duration::from_secs(120);
    outcome(ok, format!("within 4 se: {}; {elapsed:.2?}", parts.join(", ")))
}

fn reduction_identities() -> Outcome {
    let worst = reduction_suite(1000, 99).expect("evaluators run");
    outcome(worst <= 1e-12, format!("max deviation {worst:.2e}"))
}

/// Entropy in bits of a finite distribution.
fn entropy(row: &[f64]) -> f64 {
    row.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.log2()).sum()
}

/// Maximum of `H(V|τ)` over conditional pmfs on `τ ≤ tau_max`, `v ≤ v_max`
/// with `E[T] = m` and `E[T²] ≤ 2αm`, by a shrinking full-factorial grid over
/// the free coordinates. The mean equality eliminates `p(1|τ=1)` and each
/// row's `p(0|τ)` is fixed by normalization.
fn brute_force(model: &ArrivalModel, tau_max: u64, v_max: u64, alpha: f64, m: f64) -> Option<f64> {
    let (w, _) = tau_weights(model, tau_max);
    let t_n = tau_max as usize;
    let v_n = v_max as usize;
    let dim = t_n * v_n - 1;
    let s_bound = 2.0 * alpha * m;
    let mean_tau: f64 = w.iter().enumerate().map(|(i, wt)| wt * (i + 1) as f64).sum();

    // Full matrix from free coordinates; None if outside the simplex.
    let assemble = |x: &[f64]| -> Option<Vec<Vec<f64>>> {
        let mut rows = vec![vec![0.0; v_n + 1]; t_n];
        let mut k = 0;
        let mut partial = mean_tau;
        for t in 0..t_n {
            for v in 1..=v_n {
                if t == 0 && v == 1 {
                    continue;
                }
                rows[t][v] = x[k];
                partial += w[t] * v as f64 * x[k];
                k += 1;
            }
        }
        rows[0][1] = (m - partial) / w[0];
        for row in rows.iter_mut() {
            let rest: f64 = row[1..].iter().sum();
            row[0] = 1.0 - rest;
            if row.iter().any(|&p| p < 0.0) {
                return None;
            }
        }
        Some(rows)
    };
    let value = |x: &[f64]| -> Option<f64> {
        let rows = assemble(x)?;
        let mut s = 0.0;
        let mut h = 0.0;
        for (t, row) in rows.iter().enumerate() {
            let tf = (t + 1) as f64;
            for (v, p) in row.iter().enumerate() {
                s += w[t] * p * (tf + v as f64).powi(2);
            }
            h += w[t] * entropy(row);
        }
        (s <= s_bound).then_some(h)
    };

    if dim == 0 {
        return value(&[]);
    }
    let n: usize = match dim {
        1 => 41,
        2 => 21,
        3 => 11,
        _ => 7,
    };
    let mut center = vec![0.5; dim];
    let mut radius = 0.5;
    let mut best = None::<f64>;
    let mut idx = vec![0usize; dim];
    let mut x = vec![0.0; dim];
    while radius > 1e-13 {
        let mut level_best = best.map(|b| (b, center.clone()));
        idx.iter_mut().for_each(|i| *i = 0);
        'grid: loop {
            for d in 0..dim {
                x[d] = (center[d] - radius + 2.0 * radius * idx[d] as f64 / (n - 1) as f64).clamp(0.0, 1.0);
            }
            if let Some(h) = value(&x) {
                if level_best.as_ref().is_none_or(|(b, _)| h > *b) {
                    level_best = Some((h, x.clone()));
                }
            }
            for d in 0..dim {
                idx[d] += 1;
                if idx[d] < n {
                    continue 'grid;
                }
                idx[d] = 0;
            }
            break;
        }
        match level_best {
            Some((h, c)) => {
                best = Some(h);
                center = c;
                radius *= 0.6;
            }
            // Nothing feasible yet: the first level was too coarse.
            None if radius >= 0.5 => return None,
            None => radius *= 0.6,
        }
    }
    best
}

fn solver_correctness() -> Outcome {
    let eps = 1e-8;
    let mut ok = true;
    let mut worst = 0.0f64;
    let mut cases = 0;
    let mut binding = 0;
    // (q, tau_max, v_max, alpha, m)
    let instances = [
        (0.5, 1, 1, 0.8, 1.3),
        (0.5, 1, 2, 0.9231, 1.6),
        (0.5, 1, 3, 1.0947, 1.9),
        (0.5, 1, 3, f64::INFINITY, 2.0),
        (0.5, 2, 1, 1.0234, 1.9),
        (0.5, 2, 2, 1.1617, 2.1),
        (0.7, 2, 2, 1.0204, 1.8),
        (0.5, 2, 3, 1.3652, 2.4),
        (0.3, 2, 3, 1.4128, 2.5),
        (0.5, 2, 3, f64::INFINITY, 2.6),
    ];
    for &(q, tau_max, v_max, alpha, m) in &instances {
        let model = ArrivalModel::new(q).unwrap();
        let opts = EtatpOptions {
            eps,
            ..EtatpOptions::default_for(&model).with_trunc(Truncation::new(tau_max, v_max))
        };
        let solver = EtatpSolver::new(model, opts).unwrap();
        let sol = match solver.solve_inner(alpha, m) {
            Ok(s) => s,
            Err(e) => {
                eprintln!("  solve_inner({q}, {tau_max}, {v_max}, {alpha}, {m}) failed: {e}");
                ok = false;
                continue;
            }
        };
        let Some(bf) = brute_force(&model, tau_max, v_max, alpha, m) else {
            eprintln!("  brute force found no feasible point for ({q}, {tau_max}, {v_max}, {alpha}, {m})");
            ok = false;
            continue;
        };
        let cm = sol.pmf.cycle_moments();
        if cm.second_t >= 2.0 * alpha * m * (1.0 - 1e-9) {
            binding += 1;
        }
        let diff = (sol.entropy_bits - bf).abs();
        worst = worst.max(diff);
        ok &= diff <= 2.0 * eps;
        cases += 1;
    }

    // q = 1, v_max = 1, alpha = 0.9: one free probability s = P(V = 1).
    let model = ArrivalModel::new(1.0).unwrap();
    let opts = EtatpOptions::default_for(&model).with_trunc(Truncation::new(1, 1));
    let r_solver = EtatpSolver::new(model, opts)
        .and_then(|s| s.solve_outer(0.9))
        .map(|o| o.point.rate);
    let mut r_scan = 0.0f64;
    for i in 0..=1_000_000u32 {
        let s = i as f64 / 1e6;
        if (1.0 + 3.0 * s) / (2.0 * (1.0 + s)) <= 0.9 {
            r_scan = r_scan.max(binary_entropy(s).unwrap() / (1.0 + s));
        }
    }
    let r_ok = matches!(r_solver, Ok(r) if (r - r_scan).abs() <= 1e-3 && (r - 0.6942).abs() <= 1e-3);
    ok &= r_ok && (r_scan - 0.6942).abs() <= 1e-3;
    outcome(
        ok,
        format!(
            "{cases}/{} brute-force instances ({binding} with binding AoI bound), max |dH| {worst:.2e} (limit {:.0e}); R(0.9) = {:?}, scan {r_scan:.6}",
            instances.len(),
            2.0 * eps,
            r_solver.map(|r| format!("{r:.6}"))
        ),
    )
}

fn class_maximum() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for q in [0.2, 0.5, 0.7] {
        let model = ArrivalModel::new(q).unwrap();
        let (zw, _) = max_rate_zero_wait(&model);
        let et = EtatpSolver::new(model, EtatpOptions::default_for(&model))
            .and_then(|s| s.max_rate())
            .map(|o| o.point.rate);
        let diff = et.as_ref().map_or(f64::INFINITY, |r| (r - zw).abs());
        ok &= diff <= 1e-5;
        parts.push(format!("q={q} |diff| {diff:.1e}"));
    }
    let (r1, p1) = max_rate_zero_wait(&ArrivalModel::new(1.0).unwrap());
    ok &= r1 == 1.0 && p1 == 0.5;
    outcome(ok, format!("{}; q=1 gives {r1} at p={p1}", parts.join(", ")))
}

fn dominance(res: &aoi_tradeoff::cli::FiguresOutput) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for rep in &res.reports {
        ok &= rep.rates.len() == 40;
        ok &= rep.containments_hold();
        let monotone = rep.aoi.iter().all(|a| a.windows(2).all(|w| w[0] <= w[1]));
        ok &= monotone;
        let worst = rep
            .comparisons
            .iter()
            .filter(|c| c.expected)
            .map(|c| c.max_violation)
            .fold(f64::NEG_INFINITY, f64::max);
        parts.push(format!("q={} worst excess {worst:.1e}", rep.q));
    }
    ok &= res.reports.len() == 3;
    outcome(ok, parts.join(", "))
}

fn figure_claims(res: &aoi_tradeoff::cli::FiguresOutput, elapsed: Duration) -> Outcome {
    use PolicyKind::*;
    let by_q = |q: f64| res.reports.iter().find(|r| r.q == q).expect("configured q");
    let zero_wait_worst = res.reports.iter().all(|r| r.zero_wait_worst);
    let g05 = by_q(0.5).gap(Threshold, ZeroWait).unwrap();
    let r07 = by_q(0.7);
    let g07 = [
        r07.gap(SimplifiedEtatp, Threshold).unwrap(),
        r07.gap(SimplifiedEtatp, ZeroWait).unwrap(),
        r07.gap(Threshold, ZeroWait).unwrap(),
    ];
    let g02 = by_q(0.2).gap(GeneralEtatp, SimplifiedEtatp).unwrap();
    let ok = zero_wait_worst
        && g05 < 0.02
        && g07.iter().all(|g| *g < 0.02)
        && g02 > 0.02
        && elapsed < Duration::from_secs(30 * 60);
    outcome(
        ok,
        format!(
            "zero-wait worst {zero_wait_worst}; q=0.5 thr/zw gap {:.2}%; q=0.7 gaps {:.2}%, {:.2}%, {:.2}%; q=0.2 etatp/simplified gap {:.2}%; figures run {elapsed:.2?}",
            100.0 * g05,
            100.0 * g07[0],
            100.0 * g07[1],
            100.0 * g07[2],
            100.0 * g02
        ),
    )
}

fn identical_dirs(a: &Path, b: &Path) -> Result<usize, String> {
    let mut names: Vec<_> = fs::read_dir(a)
        .map_err(|e| e.to_string())?
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    for n in &names {
        let x = fs::read(a.join(n)).map_err(|e| e.to_string())?;
        let y = fs::read(b.join(n)).map_err(|e| format!("{}: {e}", n.to_string_lossy()))?;
        if x != y {
            return Err(format!("{} differs", n.to_string_lossy()));
        }
    }
    Ok(names.len())
}

fn main() -> ExitCode {
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    results.push((1, "formula validation", formula_validation()));
    results.push((2, "simulation validation", simulation_validation()));
    results.push((3, "reduction identities", reduction_identities()));
    results.push((4, "solver correctness", solver_correctness()));
    results.push((5, "class-maximum coincidence", class_maximum()));

    let dir = tempfile::tempdir().expect("temp dir");
    let cfg = |sub: &str| RunConfig {
        out_dir: dir.path().join(sub),
        seed: 5,
        ..RunConfig::default()
    };
    let start = Instant::now();
    let first = run_figures(&cfg("a"));
    let elapsed = start.elapsed();
    match &first {
        Ok(res) => {
            results.push((6, "dominance suite", dominance(res)));
            results.push((7, "figure claims", figure_claims(res, elapsed)));
            let second = run_figures(&cfg("b"));
            let det = match second {
                Ok(_) => match identical_dirs(&dir.path().join("a"), &dir.path().join("b")) {
                    Ok(n) => outcome(
                        n == 7 && res.files.len() == 7,
                        format!("{n} files byte-identical across two runs"),
                    ),
                    Err(e) => outcome(false, e),
                },
                Err(e) => outcome(false, format!("second run failed: {e:?}")),
            };
            results.push((8, "determinism", det));
        }
        Err(e) => {
            for (n, name) in [(6, "dominance suite"), (7, "figure claims"), (8, "determinism")] {
                results.push((n, name, outcome(false, format!("figures run failed: {e:?}"))));
            }
        }
    }

    let mut all = true;
    for (n, name, o) in &results {
        all &= o.passed;
        println!("criterion {n} {name}: {} ({})", if o.passed { "PASS" } else { "FAIL" }, o.detail);
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
