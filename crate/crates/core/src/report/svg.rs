//! Minimal standalone SVG emitters. The CSV files are the source of truth;
//! these overlays carry their data points as comments for traceability.

use std::fmt::Write as _;

use ndarray::Array1;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

/// Overlay of per-expert probability surfaces: one dot per grid context and
/// expert, opacity proportional to that expert's probability (normalized by
/// its own maximum).
pub fn heatmap_svg(grid: &[Array1<f64>], surfaces: &[Vec<f64>]) -> String {
    let (w, h) = (640.0, 640.0);
    let (min_x, max_x, min_y, max_y) = bounds(grid);
    let sx = |x: f64| (x - min_x) / (max_x - min_x).max(1e-12) * (w - 40.0) + 20.0;
    let sy = |y: f64| h - 20.0 - (y - min_y) / (max_y - min_y).max(1e-12) * (h - 40.0);

    let mut s = svg_open(w, h);
    for (o, surface) in surfaces.iter().enumerate() {
        let p_max = surface.iter().fold(0.0f64, |m, &p| m.max(p)).max(1e-300);
        let color = PALETTE[o % PALETTE.len()];
        let _ = writeln!(s, "  <g id=\"expert-{o}\">");
        for (c, &p) in grid.iter().zip(surface) {
            let _ = writeln!(s, "    <!-- data {} {} {p} -->", c[0], c[1]);
            let _ = writeln!(
                s,
                "    <circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"6\" fill=\"{color}\" fill-opacity=\"{:.4}\"/>",
                sx(c[0]),
                sy(c[1]),
                0.85 * p / p_max
            );
        }
        let _ = writeln!(s, "  </g>");
    }
    s.push_str("</svg>\n");
    s
}

/// A learning curve with a shaded confidence band.
pub fn curve_svg(xs: &[f64], ys: &[f64], lo: &[f64], hi: &[f64], title: &str) -> String {
    let (w, h) = (720.0, 420.0);
    let min_x = xs.first().copied().unwrap_or(0.0);
    let max_x = xs.last().copied().unwrap_or(1.0);
    let min_y = lo.iter().copied().fold(f64::INFINITY, f64::min);
    let max_y = hi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let pad_y = 0.05 * (max_y - min_y).max(1e-12);
    let (min_y, max_y) = (min_y - pad_y, max_y + pad_y);
    let sx = |x: f64| (x - min_x) / (max_x - min_x).max(1e-12) * (w - 80.0) + 60.0;
    let sy = |y: f64| h - 40.0 - (y - min_y) / (max_y - min_y).max(1e-12) * (h - 70.0);

    let mut s = svg_open(w, h);
    let _ = writeln!(s, "  <text x=\"20\" y=\"22\" font-family=\"sans-serif\" font-size=\"14\">{title}</text>");
    for ((x, y), (l, u)) in xs.iter().zip(ys).zip(lo.iter().zip(hi)) {
        let _ = writeln!(s, "  <!-- data {x} {y} {l} {u} -->");
    }
    // Confidence band as a closed polygon.
    let mut band = String::new();
    for (x, v) in xs.iter().zip(hi) {
        let _ = write!(band, "{:.2},{:.2} ", sx(*x), sy(*v));
    }
    for (x, v) in xs.iter().zip(lo).rev() {
        let _ = write!(band, "{:.2},{:.2} ", sx(*x), sy(*v));
    }
    let _ = writeln!(s, "  <polygon points=\"{}\" fill=\"#1f77b4\" fill-opacity=\"0.2\"/>", band.trim());
    let mut line = String::new();
    for (x, y) in xs.iter().zip(ys) {
        let _ = write!(line, "{:.2},{:.2} ", sx(*x), sy(*y));
    }
    let _ = writeln!(
        s,
        "  <polyline points=\"{}\" fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\"/>",
        line.trim()
    );
    let _ = writeln!(
        s,
        "  <line x1=\"60\" y1=\"{0:.2}\" x2=\"{1:.2}\" y2=\"{0:.2}\" stroke=\"#333\"/>",
        h - 40.0,
        w - 20.0
    );
    let _ = writeln!(s, "  <line x1=\"60\" y1=\"30\" x2=\"60\" y2=\"{:.2}\" stroke=\"#333\"/>", h - 40.0);
    s.push_str("</svg>\n");
    s
}

fn svg_open(w: f64, h: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
    )
}

fn bounds(grid: &[Array1<f64>]) -> (f64, f64, f64, f64) {
    let mut min_x = f64::INFINITY;
    let mut max_x = f64::NEG_INFINITY;
    let mut min_y = f64::INFINITY;
    let mut max_y = f64::NEG_INFINITY;
    for c in grid {
        min_x = min_x.min(c[0]);
        max_x = max_x.max(c[0]);
        min_y = min_y.min(c[1]);
        max_y = max_y.max(c[1]);
    }
    (min_x, max_x, min_y, max_y)
}
