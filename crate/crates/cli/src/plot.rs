//! Minimal SVG line plot of one-dimensional potentials.

use std::fmt::Write as _;

use mbb_core::convex::ConvexPL;
use mbb_core::mbb::Instance;
use mbb_core::measure::Point;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 40.0;
const SAMPLES: usize = 400;
const COLORS: [&str; 3] = ["#1f77b4", "#2ca02c", "#ff7f0e"];

/// Draws `psi_hat` (black) and the given `(n, psi_n)` over the hull of
/// `spt nu` widened by a quarter of its length, with `nu` atoms as ticks.
pub fn render(inst: &Instance, psi_hat: &ConvexPL, tail: &[(usize, ConvexPL)]) -> String {
    let xs: Vec<f64> = inst.nu.points().iter().map(|p| p[0]).collect();
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let pad = 0.25 * (hi - lo).max(1e-3);
    let (a, b) = (lo - pad, hi + pad);
    let grid: Vec<f64> = (0..=SAMPLES).map(|i| a + (b - a) * i as f64 / SAMPLES as f64).collect();

    let mut curves: Vec<(String, &str, Vec<f64>)> = vec![(
        "psi_hat".into(),
        "#000000",
        grid.iter().map(|&x| psi_hat.eval(&Point::scalar(x))).collect(),
    )];
    for (k, (n, psi)) in tail.iter().enumerate() {
        curves.push((
            format!("psi_{n}"),
            COLORS[k % COLORS.len()],
            grid.iter().map(|&x| psi.eval(&Point::scalar(x))).collect(),
        ));
    }
    let ymin = curves.iter().flat_map(|c| &c.2).copied().fold(f64::INFINITY, f64::min);
    let ymax = curves.iter().flat_map(|c| &c.2).copied().fold(f64::NEG_INFINITY, f64::max);
    let yspan = (ymax - ymin).max(1e-9);
    let sx = |x: f64| MARGIN + (x - a) / (b - a) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - ymin) / yspan * (HEIGHT - 2.0 * MARGIN);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    let _ = writeln!(
        svg,
        r##"<line x1="{MARGIN}" y1="{y}" x2="{x2}" y2="{y}" stroke="#888888"/>"##,
        y = HEIGHT - MARGIN,
        x2 = WIDTH - MARGIN
    );
    for &x in &xs {
        let _ = writeln!(
            svg,
            r##"<line x1="{px:.2}" y1="{y1}" x2="{px:.2}" y2="{y2}" stroke="#d62728" stroke-width="2"/>"##,
            px = sx(x),
            y1 = HEIGHT - MARGIN,
            y2 = HEIGHT - MARGIN + 8.0
        );
    }
    for (k, (label, color, ys)) in curves.iter().enumerate() {
        let pts: Vec<String> = grid
            .iter()
            .zip(ys)
            .map(|(&x, &y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let dash = if k == 0 { "" } else { r#" stroke-dasharray="6 3""# };
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{}"/>"#,
            pts.join(" ")
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" fill="{color}">{label}</text>"#,
            MARGIN + 8.0,
            MARGIN + 14.0 * (k as f64 + 1.0)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{MARGIN}" y="{}" font-family="sans-serif" font-size="11">[{a:.3}, {b:.3}] x [{ymin:.3}, {ymax:.3}]</text>"#,
        HEIGHT - 8.0
    );
    svg.push_str("</svg>\n");
    svg
}
