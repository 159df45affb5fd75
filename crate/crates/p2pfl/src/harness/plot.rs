//! Minimal SVG line chart of a server table: accuracy against the left
//! axis in [0, 1], loss against the right axis. No drawing dependencies;
//! the output is a deterministic text file.

use crate::harness::tables::ServerRow;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 56.0;

fn x_pos(i: usize, n: usize) -> f64 {
    if n <= 1 {
        return WIDTH / 2.0;
    }
    MARGIN + (WIDTH - 2.0 * MARGIN) * i as f64 / (n - 1) as f64
}

fn y_pos(v: f64, max: f64) -> f64 {
    let max = if max > 0.0 { max } else { 1.0 };
    HEIGHT - MARGIN - (HEIGHT - 2.0 * MARGIN) * (v / max)
}

fn polyline(points: &[(f64, f64)], color: &str) -> String {
    let coords: Vec<String> = points
        .iter()
        .map(|(x, y)| format!("{x:.1},{y:.1}"))
        .collect();
    format!(
        "  <polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>\n",
        coords.join(" ")
    )
}

/// Renders accuracy and loss per round. Rows must be non-empty.
pub fn render_server_svg(rows: &[ServerRow], title: &str) -> String {
    let n = rows.len();
    let loss_max = rows.iter().map(|r| r.loss).fold(0.0f64, f64::max).max(1e-9);
    let acc_points: Vec<(f64, f64)> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| (x_pos(i, n), y_pos(r.accuracy, 1.0)))
        .collect();
    let loss_points: Vec<(f64, f64)> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| (x_pos(i, n), y_pos(r.loss, loss_max)))
        .collect();

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str("  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "  <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">{title}</text>\n",
        WIDTH / 2.0
    ));
    // axes
    svg.push_str(&format!(
        "  <line x1=\"{MARGIN}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        HEIGHT - MARGIN,
        WIDTH - MARGIN,
        HEIGHT - MARGIN
    ));
    svg.push_str(&format!(
        "  <line x1=\"{MARGIN}\" y1=\"{MARGIN}\" x2=\"{MARGIN}\" y2=\"{}\" stroke=\"black\"/>\n",
        HEIGHT - MARGIN
    ));
    // round ticks (1-based labels)
    for (i, row) in rows.iter().enumerate() {
        let x = x_pos(i, n);
        svg.push_str(&format!(
            "  <text x=\"{x:.1}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
            HEIGHT - MARGIN + 18.0,
            row.round + 1
        ));
    }
    svg.push_str(&polyline(&acc_points, "#1f77b4"));
    svg.push_str(&polyline(&loss_points, "#d62728"));
    svg.push_str(&format!(
        "  <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#1f77b4\">accuracy (0-1)</text>\n",
        MARGIN + 8.0,
        MARGIN + 16.0
    ));
    svg.push_str(&format!(
        "  <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#d62728\">loss (0-{loss_max:.3})</text>\n",
        MARGIN + 8.0,
        MARGIN + 32.0
    ));
    svg.push_str("</svg>\n");
    svg
}
