//! CSV output for curves and dominance reports.
//!
//! Floats are written in scientific notation with 17 significant digits,
//! which round-trips every `f64` exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{CurveMetadata, DominanceReport, RegionError, TradeoffCurve};
use crate::policies::{PolicyKind, PolicyParams, TradeoffPoint};
use crate::stochastics::ArrivalModel;

pub const CURVE_HEADER: &str =
    "q,policy,rate_bits_per_slot,aoi_slots,param1_name,param1,param2_name,param2,param3_name,param3";

pub const REPORT_HEADER: &str =
    "q,better,worse,expected,tolerance,max_violation,max_relative_gap,holds,overlaps";

const PARAM_SLOTS: usize = 3;

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn push_curve_rows(out: &mut String, curve: &TradeoffCurve) {
    let q = fmt_f64(curve.model.q());
    for pt in &curve.points {
        let _ = write!(out, "{q},{},{},{}", curve.policy_kind, fmt_f64(pt.rate), fmt_f64(pt.aoi));
        let named = pt.params.named_values();
        for i in 0..PARAM_SLOTS {
            match named.get(i) {
                Some((name, v)) => {
                    let _ = write!(out, ",{name},{}", fmt_f64(*v));
                }
                None => out.push_str(",,"),
            }
        }
        out.push('\n');
    }
}

/// Renders curves as one CSV table, in the order given.
pub fn curves_to_string(curves: &[TradeoffCurve]) -> String {
    let mut out = String::from(CURVE_HEADER);
    out.push('\n');
    for c in curves {
        push_curve_rows(&mut out, c);
    }
    out
}

pub fn report_to_string(report: &DominanceReport) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    let q = fmt_f64(report.q);
    for c in &report.comparisons {
        let _ = writeln!(
            out,
            "{q},{},{},{},{},{},{},{},{}",
            c.better,
            c.worse,
            c.expected,
            fmt_f64(c.tolerance),
            fmt_f64(c.max_violation),
            fmt_f64(c.max_relative_gap),
            c.holds(),
            c.overlaps()
        );
    }
    out
}

fn write_file(path: &Path, contents: &str) -> Result<(), RegionError> {
    fs::write(path, contents).map_err(|source| RegionError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn emit_csv(curves: &[TradeoffCurve], path: &Path) -> Result<(), RegionError> {
    write_file(path, &curves_to_string(curves))
}

pub fn emit_report_csv(report: &DominanceReport, path: &Path) -> Result<(), RegionError> {
    write_file(path, &report_to_string(report))
}

/// One parsed data row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub q: f64,
    pub policy: PolicyKind,
    pub rate: f64,
    pub aoi: f64,
    pub params: Vec<(String, f64)>,
}

pub fn parse_rows(text: &str) -> Result<Vec<CsvRow>, RegionError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == CURVE_HEADER => {}
        _ => {
            return Err(RegionError::Parse {
                line: 1,
                msg: "missing or unexpected header".into(),
            })
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        let err = |msg: String| RegionError::Parse { line: line_no, msg };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 + 2 * PARAM_SLOTS {
            return Err(err(format!("expected {} fields, got {}", 4 + 2 * PARAM_SLOTS, fields.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| err(format!("bad number {s:?}: {e}")));
        let policy = fields[1].parse::<PolicyKind>().map_err(&err)?;
        let mut params = Vec::new();
        for pair in fields[4..].chunks(2) {
            match (pair[0], pair[1]) {
                ("", "") => {}
                (name, v) if !name.is_empty() => params.push((name.to_string(), num(v)?)),
                _ => return Err(err("parameter value without a name".into())),
            }
        }
        rows.push(CsvRow {
            q: num(fields[0])?,
            policy,
            rate: num(fields[2])?,
            aoi: num(fields[3])?,
            params,
        });
    }
    Ok(rows)
}

fn params_from_row(row: &CsvRow, line: usize) -> Result<PolicyParams, RegionError> {
    let err = |msg: &str| RegionError::Parse { line, msg: msg.into() };
    let get = |name: &str| {
        row.params
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
            .ok_or_else(|| err(&format!("missing parameter {name}")))
    };
    let int = |name: &str| -> Result<u64, RegionError> {
        let v = get(name)?;
        if v >= 0.0 && v.fract() == 0.0 && v < u64::MAX as f64 {
            Ok(v as u64)
        } else {
            Err(err(&format!("{name} is not a nonnegative integer")))
        }
    };
    Ok(match row.policy {
        PolicyKind::ZeroWait => PolicyParams::ZeroWait { p: get("p")? },
        PolicyKind::Threshold => PolicyParams::Threshold {
            tau0: int("tau0")?,
            p: get("p")?,
        },
        PolicyKind::SimplifiedEtatp => PolicyParams::SimplifiedEtatp {
            c: int("c")?,
            p_low: get("p_low")?,
            p_high: get("p_high")?,
        },
        PolicyKind::GeneralEtatp => {
            return Err(err("ETATP rows carry summary parameters only and cannot be rebuilt"))
        }
    })
}

/// Rebuilds closed-form curves from CSV text, grouping consecutive rows with
/// the same `(q, policy)`. Metadata is not stored in the file and comes back
/// as [`CurveMetadata::new`].
pub fn parse_curves(text: &str) -> Result<Vec<TradeoffCurve>, RegionError> {
    let rows = parse_rows(text)?;
    let mut curves: Vec<TradeoffCurve> = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        let line = i + 2;
        let params = params_from_row(row, line)?;
        let start_new = curves
            .last()
            .is_none_or(|c| c.model.q() != row.q || c.policy_kind != row.policy);
        if start_new {
            let model = ArrivalModel::new(row.q).map_err(|e| RegionError::Parse {
                line,
                msg: e.to_string(),
            })?;
            curves.push(TradeoffCurve::new(model, row.policy, CurveMetadata::new()));
        }
        curves.last_mut().expect("pushed above").points.push(TradeoffPoint {
            rate: row.rate,
            aoi: row.aoi,
            params,
        });
    }
    Ok(curves)
}

pub fn read_curves(path: &Path) -> Result<Vec<TradeoffCurve>, RegionError> {
    let text = fs::read_to_string(path).map_err(|source| RegionError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_curves(&text)
}
