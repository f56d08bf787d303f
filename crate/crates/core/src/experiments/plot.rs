//! Minimal hand-written SVG charts.

use std::collections::BTreeMap;
use std::fmt::Write;

use super::correlations::HistogramBin;

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD: f64 = 50.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

fn header(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<path d="M{PAD} {PAD} V{y} H{x}" stroke="black" fill="none"/>"#,
        y = H - PAD,
        x = W - PAD
    );
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Bar chart with dashed verticals at `+-band`.
pub fn histogram_svg(title: &str, bins: &[HistogramBin], band: f64) -> String {
    let mut s = header(title);
    let (lo, hi) = (bins.first().map_or(-1.0, |b| b.lo), bins.last().map_or(1.0, |b| b.hi));
    let max = bins.iter().map(|b| b.count).max().unwrap_or(1).max(1) as f64;
    let sx = |x: f64| PAD + (x - lo) / (hi - lo) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - y / max * (H - 2.0 * PAD);
    for b in bins {
        let _ = writeln!(
            s,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#1f77b4" stroke="white"/>"##,
            sx(b.lo),
            sy(b.count as f64),
            sx(b.hi) - sx(b.lo),
            H - PAD - sy(b.count as f64)
        );
    }
    for x in [-band, band] {
        if x > lo && x < hi {
            let _ = writeln!(
                s,
                r#"<line x1="{0:.2}" x2="{0:.2}" y1="{PAD}" y2="{1}" stroke="red" stroke-dasharray="5,4"/>"#,
                sx(x),
                H - PAD
            );
        }
    }
    let _ = writeln!(s, r#"<text x="{PAD}" y="{}">{lo:.4}</text>"#, H - PAD + 16.0);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="end">{hi:.4}</text>"#,
        W - PAD,
        H - PAD + 16.0
    );
    s.push_str("</svg>\n");
    s
}

/// Populations against time: exact as lines, direct as crosses, mitigated as
/// dots, one colour per state.
pub fn timeseries_svg(series: &BTreeMap<String, Vec<(f64, f64, f64, f64)>>) -> String {
    let mut s = header("populations: exact (line), direct (x), mitigated (dot)");
    let t_max = series.values().flatten().map(|p| p.0).fold(0.0, f64::max).max(1e-12);
    let sx = |t: f64| PAD + t / t_max * (W - 2.0 * PAD);
    let sy = |p: f64| H - PAD - p.clamp(-0.1, 1.1) * (H - 2.0 * PAD);
    for (i, (label, pts)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let path: Vec<String> = pts.iter().map(|p| format!("{:.2},{:.2}", sx(p.0), sy(p.1))).collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" stroke="{color}" fill="none"/>"#,
            path.join(" ")
        );
        for p in pts {
            let (x, y) = (sx(p.0), sy(p.2));
            let _ = writeln!(
                s,
                r#"<path d="M{:.2} {:.2} l6 6 m0 -6 l-6 6" stroke="{color}"/>"#,
                x - 3.0,
                y - 3.0
            );
            let _ = writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}"/>"#,
                sx(p.0),
                sy(p.3)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{color}">|{}&gt;</text>"#,
            W - PAD + 6.0,
            PAD + 16.0 * i as f64,
            escape(label)
        );
    }
    s.push_str("</svg>\n");
    s
}
