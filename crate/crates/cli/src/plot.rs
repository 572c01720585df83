//! Convergence plot: characteristic-norm ratio on a log axis against iteration.

use std::fmt::Write as _;

use meshopt::solver::ConvergenceReport;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

pub fn convergence_svg(reports: &[ConvergenceReport], epsilon: f64) -> String {
    let max_iter = reports.iter().map(ConvergenceReport::iterations).max().unwrap_or(0).max(1) as f64;
    let positive = reports.iter().flat_map(|r| r.rows.iter().map(|row| row.ratio)).filter(|v| *v > 0.0 && v.is_finite());
    let (lo, hi) = positive.chain([epsilon]).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (lo, hi) = (lo.log10().floor(), hi.log10().ceil().max(lo.log10().floor() + 1.0));
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |i: f64| LEFT + pw * i / max_iter;
    let sy = |r: f64| TOP + ph * (hi - r.max(10f64.powf(lo)).log10()) / (hi - lo);

    let mut s = String::new();
    writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#).unwrap();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#).unwrap();
    writeln!(s, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#).unwrap();
    writeln!(s, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#).unwrap();

    for e in (lo as i32)..=(hi as i32) {
        let y = sy(10f64.powi(e));
        writeln!(s, r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/>"##, LEFT + pw).unwrap();
        writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">1e{e}</text>"#, LEFT - 6.0, y + 4.0).unwrap();
    }
    let step = nice_step(max_iter);
    let mut i = 0.0;
    while i <= max_iter + 1e-9 {
        let x = sx(i);
        writeln!(s, r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#, TOP + ph, TOP + ph + 5.0).unwrap();
        writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, TOP + ph + 18.0, i as usize).unwrap();
        i += step;
    }
    writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">iteration</text>"#, LEFT + pw / 2.0, HEIGHT - 10.0).unwrap();
    writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">gradient norm / characteristic norm</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    )
    .unwrap();
    let ye = sy(epsilon);
    writeln!(s, r#"<line x1="{LEFT}" y1="{ye:.2}" x2="{:.2}" y2="{ye:.2}" stroke="black" stroke-dasharray="4 3"/>"#, LEFT + pw).unwrap();

    for (k, r) in reports.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let points: Vec<String> = r.rows.iter().map(|row| format!("{:.2},{:.2}", sx(row.iteration as f64), sy(row.ratio))).collect();
        writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, points.join(" ")).unwrap();
        let ly = TOP + 16.0 + 18.0 * k as f64;
        let lx = LEFT + pw + 12.0;
        writeln!(s, r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#, lx + 20.0).unwrap();
        writeln!(s, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, lx + 26.0, ly + 4.0, escape(r.method.name())).unwrap();
    }
    s.push_str("</svg>\n");
    s
}

/// Tick spacing of 1, 2 or 5 times a power of ten, about five ticks.
fn nice_step(span: f64) -> f64 {
    let raw = (span / 5.0).max(1.0);
    let base = 10f64.powf(raw.log10().floor());
    [1.0, 2.0, 5.0, 10.0].into_iter().map(|m| m * base).find(|&v| v >= raw).unwrap_or(10.0 * base)
}
