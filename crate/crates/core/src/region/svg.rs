//! Static SVG line charts of tradeoff curves.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{RegionError, TradeoffCurve};
use crate::policies::PolicyKind;

#[derive(Debug, Clone, PartialEq)]
pub struct SvgStyle {
    pub width: u32,
    pub height: u32,
    pub title: Option<String>,
}

impl Default for SvgStyle {
    fn default() -> Self {
        Self {
            width: 640,
            height: 480,
            title: None,
        }
    }
}

const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 55.0;
const TICKS: usize = 5;

fn colour(kind: PolicyKind) -> &'static str {
    match kind {
        PolicyKind::ZeroWait => "#1f77b4",
        PolicyKind::Threshold => "#ff7f0e",
        PolicyKind::SimplifiedEtatp => "#2ca02c",
        PolicyKind::GeneralEtatp => "#d62728",
    }
}

fn dash(kind: PolicyKind) -> &'static str {
    match kind {
        PolicyKind::ZeroWait => "",
        PolicyKind::Threshold => " stroke-dasharray=\"6 3\"",
        PolicyKind::SimplifiedEtatp => " stroke-dasharray=\"2 2\"",
        PolicyKind::GeneralEtatp => "",
    }
}

fn label(kind: PolicyKind) -> &'static str {
    match kind {
        PolicyKind::ZeroWait => "zero-wait",
        PolicyKind::Threshold => "threshold",
        PolicyKind::SimplifiedEtatp => "simplified ETATP",
        PolicyKind::GeneralEtatp => "ETATP",
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn data_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        let pad = if lo.abs() > 0.0 { 0.05 * lo.abs() } else { 0.5 };
        return (lo - pad, hi + pad);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

/// Renders the curves as an SVG document. Rate is on the horizontal axis and
/// AoI on the vertical axis; each curve gets one polyline and a legend entry.
pub fn render_svg(curves: &[TradeoffCurve], style: &SvgStyle) -> Result<String, RegionError> {
    if curves.is_empty() {
        return Err(RegionError::Empty);
    }
    let w = style.width as f64;
    let h = style.height as f64;
    let pw = w - MARGIN_LEFT - MARGIN_RIGHT;
    let ph = h - MARGIN_TOP - MARGIN_BOTTOM;
    let all = || curves.iter().flat_map(|c| c.points.iter());
    let (x0, x1) = data_range(all().map(|p| p.rate));
    let (y0, y1) = data_range(all().map(|p| p.aoi));
    let sx = |x: f64| MARGIN_LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| MARGIN_TOP + ph - (y - y0) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\" font-family=\"sans-serif\" font-size=\"12\">",
        style.width, style.height, style.width, style.height
    );
    let _ = writeln!(s, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    if let Some(t) = &style.title {
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">{}</text>",
            w / 2.0,
            escape(t)
        );
    }
    let _ = writeln!(
        s,
        "<rect x=\"{MARGIN_LEFT:.2}\" y=\"{MARGIN_TOP:.2}\" width=\"{pw:.2}\" height=\"{ph:.2}\" fill=\"none\" stroke=\"black\"/>"
    );
    for i in 0..=TICKS {
        let fx = x0 + (x1 - x0) * i as f64 / TICKS as f64;
        let fy = y0 + (y1 - y0) * i as f64 / TICKS as f64;
        let (px, py) = (sx(fx), sy(fy));
        let bottom = MARGIN_TOP + ph;
        let _ = writeln!(
            s,
            "<line x1=\"{px:.2}\" y1=\"{bottom:.2}\" x2=\"{px:.2}\" y2=\"{:.2}\" stroke=\"black\"/>",
            bottom + 5.0
        );
        let _ = writeln!(
            s,
            "<text x=\"{px:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{fx:.3}</text>",
            bottom + 18.0
        );
        let _ = writeln!(
            s,
            "<line x1=\"{:.2}\" y1=\"{py:.2}\" x2=\"{MARGIN_LEFT:.2}\" y2=\"{py:.2}\" stroke=\"black\"/>",
            MARGIN_LEFT - 5.0
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{fy:.3}</text>",
            MARGIN_LEFT - 8.0,
            py + 4.0
        );
    }
    let _ = writeln!(
        s,
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">rate (bits/slot)</text>",
        MARGIN_LEFT + pw / 2.0,
        h - 12.0
    );
    let _ = writeln!(
        s,
        "<text x=\"18\" y=\"{:.2}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {:.2})\">average AoI (slots)</text>",
        MARGIN_TOP + ph / 2.0,
        MARGIN_TOP + ph / 2.0
    );

    for c in curves {
        let pts: Vec<String> = c
            .points
            .iter()
            .map(|p| format!("{:.2},{:.2}", sx(p.rate), sy(p.aoi)))
            .collect();
        let _ = writeln!(
            s,
            "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"2\"{} points=\"{}\"/>",
            colour(c.policy_kind),
            dash(c.policy_kind),
            pts.join(" ")
        );
    }

    let lx = MARGIN_LEFT + 12.0;
    for (i, c) in curves.iter().enumerate() {
        let ly = MARGIN_TOP + 16.0 + 18.0 * i as f64;
        let _ = writeln!(
            s,
            "<line x1=\"{lx:.2}\" y1=\"{ly:.2}\" x2=\"{:.2}\" y2=\"{ly:.2}\" stroke=\"{}\" stroke-width=\"2\"{}/>",
            lx + 24.0,
            colour(c.policy_kind),
            dash(c.policy_kind)
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\">{}</text>",
            lx + 30.0,
            ly + 4.0,
            label(c.policy_kind)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn emit_svg(curves: &[TradeoffCurve], path: &Path, style: &SvgStyle) -> Result<(), RegionError> {
    let doc = render_svg(curves, style)?;
    fs::write(path, doc).map_err(|source| RegionError::Io {
        path: path.display().to_string(),
        source,
    })
}
