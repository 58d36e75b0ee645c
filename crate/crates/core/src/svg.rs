//! Minimal SVG emission: heat grids for attribution/weight maps and the
//! cumulative repaired-levels step plot on a log-time axis.

use crate::attribution::AttributionGrid;
use crate::weightgen::WeightGrid;

const CELL: f64 = 16.0;

fn grid_header(rows: usize, cols: usize) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">\n",
        cols as f64 * CELL,
        rows as f64 * CELL,
        cols as f64 * CELL,
        rows as f64 * CELL
    )
}

fn rect(row: usize, col: usize, fill: &str) -> String {
    format!(
        "<rect x=\"{}\" y=\"{}\" width=\"{CELL}\" height=\"{CELL}\" fill=\"{fill}\" stroke=\"#888\" stroke-width=\"0.5\"/>\n",
        col as f64 * CELL,
        row as f64 * CELL
    )
}

/// Grayscale heat grid of an attribution map (dark = high attribution).
pub fn attribution_heat_svg(grid: &AttributionGrid) -> String {
    let lo = grid.values().iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = grid.values().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut out = grid_header(grid.rows(), grid.cols());
    for r in 0..grid.rows() {
        for c in 0..grid.cols() {
            let t = (grid.get(r, c) - lo) / span;
            let shade = (255.0 * (1.0 - t)) as u8;
            out.push_str(&rect(r, c, &format!("rgb({shade},{shade},{shade})")));
        }
    }
    out.push_str("</svg>\n");
    out
}

/// Weight map rendering: black squares mark the low (cheap to change) cells.
pub fn weight_map_svg(weights: &WeightGrid) -> String {
    let low = *weights.values().iter().min().expect("non-empty grid");
    let mut out = grid_header(weights.rows(), weights.cols());
    for r in 0..weights.rows() {
        for c in 0..weights.cols() {
            let fill = if weights.get(r, c) == low { "#000" } else { "#fff" };
            out.push_str(&rect(r, c, fill));
        }
    }
    out.push_str("</svg>\n");
    out
}

/// One cumulative series: (completion time, levels repaired so far).
pub type CumulativeSeries = Vec<(f64, usize)>;

const PLOT_W: f64 = 640.0;
const PLOT_H: f64 = 420.0;
const MARGIN: f64 = 50.0;
const COLORS: [&str; 6] = ["#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Step curves of cumulative repaired levels over log10 time, one per method.
pub fn cumulative_plot_svg(series: &[(String, CumulativeSeries)]) -> String {
    let mut min_t = f64::INFINITY;
    let mut max_t = f64::NEG_INFINITY;
    let mut max_n = 1usize;
    for (_, s) in series {
        for (t, n) in s {
            let t = t.max(1e-6);
            min_t = min_t.min(t);
            max_t = max_t.max(t);
            max_n = max_n.max(*n);
        }
    }
    if !min_t.is_finite() {
        min_t = 1e-3;
        max_t = 1.0;
    }
    let (lo, hi) = (min_t.log10().floor(), max_t.log10().ceil().max(min_t.log10().floor() + 1.0));
    let x = |t: f64| MARGIN + (t.max(1e-6).log10() - lo) / (hi - lo) * (PLOT_W - 2.0 * MARGIN);
    let y = |n: usize| PLOT_H - MARGIN - (n as f64 / max_n as f64) * (PLOT_H - 2.0 * MARGIN);

    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{PLOT_W}\" height=\"{PLOT_H}\" viewBox=\"0 0 {PLOT_W} {PLOT_H}\">\n"
    );
    out.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{PLOT_W}\" height=\"{PLOT_H}\" fill=\"#fff\"/>\n"
    ));
    // axes
    out.push_str(&format!(
        "<line x1=\"{MARGIN}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#000\"/>\n",
        PLOT_H - MARGIN,
        PLOT_W - MARGIN,
        PLOT_H - MARGIN
    ));
    out.push_str(&format!(
        "<line x1=\"{MARGIN}\" y1=\"{MARGIN}\" x2=\"{MARGIN}\" y2=\"{}\" stroke=\"#000\"/>\n",
        PLOT_H - MARGIN
    ));
    // decade ticks
    let mut decade = lo;
    while decade <= hi + 1e-9 {
        let tx = x(10f64.powf(decade));
        out.push_str(&format!(
            "<line x1=\"{tx}\" y1=\"{}\" x2=\"{tx}\" y2=\"{}\" stroke=\"#000\"/>\n",
            PLOT_H - MARGIN,
            PLOT_H - MARGIN + 5.0
        ));
        out.push_str(&format!(
            "<text x=\"{tx}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">1e{decade:.0}</text>\n",
            PLOT_H - MARGIN + 18.0
        ));
        decade += 1.0;
    }
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">repair time (s, log scale)</text>\n",
        PLOT_W / 2.0,
        PLOT_H - 8.0
    ));
    out.push_str(&format!(
        "<text x=\"14\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 14 {})\">repaired levels</text>\n",
        PLOT_H / 2.0,
        PLOT_H / 2.0
    ));

    for (si, (name, s)) in series.iter().enumerate() {
        let color = COLORS[si % COLORS.len()];
        if !s.is_empty() {
            let mut d = String::new();
            let mut prev_n = 0usize;
            for (i, (t, n)) in s.iter().enumerate() {
                let (px, py_prev, py) = (x(*t), y(prev_n), y(*n));
                if i == 0 {
                    d.push_str(&format!("M {px} {py_prev} "));
                } else {
                    d.push_str(&format!("L {px} {py_prev} "));
                }
                d.push_str(&format!("L {px} {py} "));
                prev_n = *n;
            }
            out.push_str(&format!("<path d=\"{d}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n"));
        }
        let ly = MARGIN + 16.0 * si as f64;
        out.push_str(&format!(
            "<line x1=\"{}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            PLOT_W - MARGIN - 110.0,
            PLOT_W - MARGIN - 90.0
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"11\">{name}</text>\n",
            PLOT_W - MARGIN - 84.0,
            ly + 4.0
        ));
    }
    out.push_str("</svg>\n");
    out
}
