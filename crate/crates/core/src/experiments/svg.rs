//! Minimal line and bar charts with a fixed view box.

use std::fmt::Write;

use super::report::{Plot, PlotKind};

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
        return (lo - pad, hi + pad);
    }
    (lo, hi)
}

fn tick_label(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-3..1e4).contains(&a) {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

/// Renders a plot as a standalone SVG document. Output depends only on the
/// plot's contents.
pub fn render(plot: &Plot) -> String {
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let (x_lo, x_hi) = match plot.kind {
        PlotKind::Line => range(plot.series.iter().flat_map(|s| s.x.iter().copied())),
        PlotKind::Bar => (-0.5, plot.categories.len().max(1) as f64 - 0.5),
    };
    let (mut y_lo, y_hi) = range(plot.series.iter().flat_map(|s| s.y.iter().copied()));
    if plot.kind == PlotKind::Bar {
        y_lo = y_lo.min(0.0);
    }
    let sx = |x: f64| LEFT + (x - x_lo) / (x_hi - x_lo) * pw;
    let sy = |y: f64| TOP + ph - (y - y_lo) / (y_hi - y_lo) * ph;
    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {W} {H}" width="{W}" height="{H}" font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(out, r#"<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="22" font-size="14" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, escape(&plot.title));
    let _ = writeln!(out, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let y = y_lo + f * (y_hi - y_lo);
        let py = sy(y);
        let _ = writeln!(out, r##"<line x1="{}" y1="{py:.2}" x2="{LEFT}" y2="{py:.2}" stroke="black"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"##, LEFT - 4.0, LEFT - 6.0, py + 4.0, tick_label(y));
        if plot.kind == PlotKind::Line {
            let x = x_lo + f * (x_hi - x_lo);
            let px = sx(x);
            let _ = writeln!(out, r#"<line x1="{px:.2}" y1="{}" x2="{px:.2}" y2="{}" stroke="black"/><text x="{px:.2}" y="{}" text-anchor="middle">{}</text>"#, TOP + ph, TOP + ph + 4.0, TOP + ph + 16.0, tick_label(x));
        }
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, H - 10.0, escape(&plot.x_label));
    let _ = writeln!(
        out,
        r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{1}</text>"#,
        TOP + ph / 2.0,
        escape(&plot.y_label)
    );
    match plot.kind {
        PlotKind::Line => {
            for (i, s) in plot.series.iter().enumerate() {
                let pts: Vec<String> =
                    s.x.iter().zip(&s.y).filter(|(x, y)| x.is_finite() && y.is_finite()).map(|(&x, &y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
                let _ = writeln!(out, r#"<polyline fill="none" stroke="{}" stroke-width="1.2" points="{}"/>"#, PALETTE[i % PALETTE.len()], pts.join(" "));
            }
        }
        PlotKind::Bar => {
            let groups = plot.series.len().max(1) as f64;
            let slot = pw / plot.categories.len().max(1) as f64;
            let bw = slot * 0.8 / groups;
            for (c, name) in plot.categories.iter().enumerate() {
                let cx = sx(c as f64);
                let _ = writeln!(out, r#"<text x="{cx:.2}" y="{}" text-anchor="middle">{}</text>"#, TOP + ph + 16.0, escape(name));
            }
            for (i, s) in plot.series.iter().enumerate() {
                for (&x, &y) in s.x.iter().zip(&s.y) {
                    if !y.is_finite() {
                        continue;
                    }
                    let left = sx(x) - slot * 0.4 + i as f64 * bw;
                    let (top, bottom) = (sy(y.max(0.0)), sy(y.min(0.0)));
                    let _ = writeln!(
                        out,
                        r#"<rect x="{left:.2}" y="{top:.2}" width="{bw:.2}" height="{:.2}" fill="{}"/>"#,
                        bottom - top,
                        PALETTE[i % PALETTE.len()]
                    );
                }
            }
        }
    }
    for (i, s) in plot.series.iter().enumerate() {
        let y = TOP + 10.0 + 16.0 * i as f64;
        let x = W - RIGHT + 10.0;
        let _ = writeln!(
            out,
            r#"<rect x="{x}" y="{}" width="12" height="4" fill="{}"/><text x="{}" y="{}">{}</text>"#,
            y - 4.0,
            PALETTE[i % PALETTE.len()],
            x + 16.0,
            y + 1.0,
            escape(&s.label)
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_deterministically() {
        let p = Plot::line("f", "a < b", "x", "y").with("s", vec![0.0, 1.0, 2.0], vec![1.0, f64::NAN, 3.0]);
        let a = render(&p);
        assert_eq!(a, render(&p));
        assert!(a.starts_with("<svg") && a.contains("viewBox=\"0 0 640 400\"") && a.contains("a &lt; b"));
        let b = Plot::bar("g", "t", "y", vec!["u".into(), "v".into()]).with("s", vec![0.0, 1.0], vec![-1.0, 2.0]);
        assert_eq!(render(&b).matches("<rect").count(), 2 + 2 + 1);
    }
}
