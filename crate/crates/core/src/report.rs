//! Rendering: the metrics text table, and dependency-free SVG figures
//! (confusion heatmap, class-stacked contribution bars, per-sample
//! waterfall). Every figure has a CSV companion emitted by the pipeline;
//! figures are never the only record of a number.

use crate::explain::{GlobalContribution, OutputSpace, Waterfall};

const METRIC_HEADERS: [&str; 6] = [
    "Accuracy",
    "Precision",
    "Recall",
    "F1 Score",
    "ROC AUC",
    "PR AUC",
];

/// Toward-PD contributions are drawn red, toward-HC blue.
const PD_COLOR: &str = "#d62728";
const HC_COLOR: &str = "#1f77b4";

/// One rendered table line: dataset, model, and six formatted metric cells.
#[derive(Debug, Clone)]
pub struct TableRow {
    pub dataset: String,
    pub model: String,
    pub cells: [String; 6],
}

/// Plain-text metrics table in the usual benchmark layout (one row per
/// model, `mean ± SD` cells).
pub fn render_metrics_table(title: &str, rows: &[TableRow]) -> String {
    let mut widths = vec!["Test Type".len(), "Model".len()];
    widths.extend(METRIC_HEADERS.iter().map(|h| h.len()));
    for row in rows {
        widths[0] = widths[0].max(row.dataset.len());
        widths[1] = widths[1].max(row.model.len());
        for (i, cell) in row.cells.iter().enumerate() {
            widths[2 + i] = widths[2 + i].max(cell.chars().count());
        }
    }
    let line = |cells: Vec<String>| {
        let mut out = String::new();
        for (i, cell) in cells.iter().enumerate() {
            if i > 0 {
                out.push_str("  ");
            }
            out.push_str(cell);
            let pad = widths[i].saturating_sub(cell.chars().count());
            out.push_str(&" ".repeat(pad));
        }
        out.trim_end().to_string()
    };
    let mut text = String::new();
    text.push_str(title);
    text.push('\n');
    let mut header = vec!["Test Type".to_string(), "Model".to_string()];
    header.extend(METRIC_HEADERS.iter().map(|h| h.to_string()));
    let header_line = line(header);
    let rule = "-".repeat(header_line.chars().count());
    text.push_str(&rule);
    text.push('\n');
    text.push_str(&header_line);
    text.push('\n');
    text.push_str(&rule);
    text.push('\n');
    for row in rows {
        let mut cells = vec![row.dataset.clone(), row.model.clone()];
        cells.extend(row.cells.iter().cloned());
        text.push_str(&line(cells));
        text.push('\n');
    }
    text.push_str(&rule);
    text.push('\n');
    text
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn svg_open(width: f64, height: f64, title: &str) -> String {
    format!(
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" ",
            "viewBox=\"0 0 {w} {h}\" font-family=\"Helvetica, Arial, sans-serif\">\n",
            "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n",
            "<text x=\"{tx}\" y=\"24\" font-size=\"15\" text-anchor=\"middle\" font-weight=\"bold\">{title}</text>\n"
        ),
        w = width,
        h = height,
        tx = width / 2.0,
        title = escape(title),
    )
}

/// 2x2 row-normalized confusion heatmap (rows: true HC, true PD).
pub fn confusion_heatmap_svg(
    normalized: [[f64; 2]; 2],
    counts: [[usize; 2]; 2],
    title: &str,
) -> String {
    let cell = 130.0;
    let left = 110.0;
    let top = 70.0;
    let width = left + 2.0 * cell + 40.0;
    let height = top + 2.0 * cell + 60.0;
    let mut svg = svg_open(width, height, title);
    let labels = ["HC", "PD"];
    for (i, label) in labels.iter().enumerate() {
        let cx = left + cell * (i as f64 + 0.5);
        svg.push_str(&format!(
            "<text x=\"{cx}\" y=\"{y}\" font-size=\"13\" text-anchor=\"middle\">Predicted {label}</text>\n",
            y = top - 12.0,
        ));
        let cy = top + cell * (i as f64 + 0.5);
        svg.push_str(&format!(
            "<text x=\"{x}\" y=\"{cy}\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 {x} {cy})\">True {label}</text>\n",
            x = left - 70.0,
        ));
    }
    for (row, row_values) in normalized.iter().enumerate() {
        for (col, &value) in row_values.iter().enumerate() {
            let x = left + cell * col as f64;
            let y = top + cell * row as f64;
            // Darker blue for heavier cells; text flips to white on dark.
            let shade = (255.0 - 175.0 * value) as u8;
            let fill = format!("rgb({shade},{},255)", (255.0 - 110.0 * value) as u8);
            let text_fill = if value > 0.6 { "white" } else { "black" };
            svg.push_str(&format!(
                "<rect x=\"{x}\" y=\"{y}\" width=\"{cell}\" height=\"{cell}\" fill=\"{fill}\" stroke=\"#444\"/>\n"
            ));
            svg.push_str(&format!(
                "<text x=\"{tx}\" y=\"{ty}\" font-size=\"17\" text-anchor=\"middle\" fill=\"{text_fill}\">{value:.3}</text>\n",
                tx = x + cell / 2.0,
                ty = y + cell / 2.0 - 4.0,
            ));
            svg.push_str(&format!(
                "<text x=\"{tx}\" y=\"{ty}\" font-size=\"12\" text-anchor=\"middle\" fill=\"{text_fill}\">n={count}</text>\n",
                tx = x + cell / 2.0,
                ty = y + cell / 2.0 + 18.0,
                count = counts[row][col],
            ));
        }
    }
    svg.push_str("</svg>\n");
    svg
}

/// Horizontal bars of the top contributions, each stacked from the HC-group
/// and PD-group mean |phi| segments.
pub fn stacked_bar_svg(contributions: &[GlobalContribution], title: &str) -> String {
    let bar_h = 22.0;
    let gap = 8.0;
    let left = 170.0;
    let top = 56.0;
    let plot_w = 470.0;
    let height = top + contributions.len() as f64 * (bar_h + gap) + 50.0;
    let width = left + plot_w + 120.0;
    let max_total = contributions
        .iter()
        .map(|c| c.total())
        .fold(f64::EPSILON, f64::max);
    let mut svg = svg_open(width, height, title);
    svg.push_str(&format!(
        "<text x=\"{x}\" y=\"42\" font-size=\"12\" fill=\"{HC_COLOR}\">&#9632; HC group</text>\n",
        x = left,
    ));
    svg.push_str(&format!(
        "<text x=\"{x}\" y=\"42\" font-size=\"12\" fill=\"{PD_COLOR}\">&#9632; PD group</text>\n",
        x = left + 110.0,
    ));
    for (i, c) in contributions.iter().enumerate() {
        let y = top + i as f64 * (bar_h + gap);
        let hc_w = plot_w * c.mean_abs_hc / max_total;
        let pd_w = plot_w * c.mean_abs_pd / max_total;
        svg.push_str(&format!(
            "<text x=\"{x}\" y=\"{ty}\" font-size=\"12\" text-anchor=\"end\">{name}</text>\n",
            x = left - 8.0,
            ty = y + bar_h - 6.0,
            name = escape(&c.feature),
        ));
        svg.push_str(&format!(
            "<rect x=\"{left}\" y=\"{y}\" width=\"{hc_w:.2}\" height=\"{bar_h}\" fill=\"{HC_COLOR}\"/>\n"
        ));
        svg.push_str(&format!(
            "<rect x=\"{x:.2}\" y=\"{y}\" width=\"{pd_w:.2}\" height=\"{bar_h}\" fill=\"{PD_COLOR}\"/>\n",
            x = left + hc_w,
        ));
        svg.push_str(&format!(
            "<text x=\"{x:.2}\" y=\"{ty}\" font-size=\"11\">{total:.4}</text>\n",
            x = left + hc_w + pd_w + 6.0,
            ty = y + bar_h - 6.0,
            total = c.total(),
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{x}\" y=\"{y}\" font-size=\"12\" text-anchor=\"middle\">mean |contribution| (HC + PD)</text>\n",
        x = left + plot_w / 2.0,
        y = height - 16.0,
    ));
    svg.push_str("</svg>\n");
    svg
}

/// Per-sample waterfall from baseline to prediction: red bars push toward
/// PD, blue bars toward HC, remainder collapsed into one step.
pub fn waterfall_svg(waterfall: &Waterfall, title: &str) -> String {
    let bar_h = 22.0;
    let gap = 8.0;
    let left = 190.0;
    let top = 64.0;
    let plot_w = 440.0;

    let mut steps: Vec<(String, f64)> = waterfall.entries.clone();
    if waterfall.remainder != 0.0 {
        steps.push((
            format!("{} other features", "remaining"),
            waterfall.remainder,
        ));
    }
    let mut cumulative = vec![waterfall.base_value];
    for (_, phi) in &steps {
        cumulative.push(cumulative.last().unwrap() + phi);
    }
    let lo = cumulative.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = cumulative.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let pad = ((hi - lo) * 0.1).max(1e-9);
    let (lo, hi) = (lo - pad, hi + pad);
    let scale = plot_w / (hi - lo);
    let x_of = |v: f64| left + (v - lo) * scale;

    let height = top + (steps.len() + 2) as f64 * (bar_h + gap) + 56.0;
    let width = left + plot_w + 90.0;
    let mut svg = svg_open(width, height, title);
    let unit = match waterfall.space {
        OutputSpace::Probability => "probability of PD",
        OutputSpace::Margin => "log-odds of PD",
    };

    let mut y = top;
    let marker = |svg: &mut String, y: f64, label: &str, value: f64| {
        svg.push_str(&format!(
            "<text x=\"{x}\" y=\"{ty}\" font-size=\"12\" text-anchor=\"end\">{label}</text>\n",
            x = left - 8.0,
            ty = y + bar_h - 6.0,
            label = escape(label),
        ));
        svg.push_str(&format!(
            "<line x1=\"{x:.2}\" y1=\"{y}\" x2=\"{x:.2}\" y2=\"{y2}\" stroke=\"#444\" stroke-dasharray=\"4 3\"/>\n",
            x = x_of(value),
            y2 = y + bar_h,
        ));
        svg.push_str(&format!(
            "<text x=\"{x:.2}\" y=\"{ty}\" font-size=\"11\" text-anchor=\"middle\">{value:.3}</text>\n",
            x = x_of(value),
            ty = y - 3.0,
        ));
    };
    marker(&mut svg, y, "baseline", waterfall.base_value);
    y += bar_h + gap;
    for (i, (name, phi)) in steps.iter().enumerate() {
        let from = cumulative[i];
        let to = cumulative[i + 1];
        let (x0, x1) = if to >= from {
            (x_of(from), x_of(to))
        } else {
            (x_of(to), x_of(from))
        };
        let color = if *phi >= 0.0 { PD_COLOR } else { HC_COLOR };
        svg.push_str(&format!(
            "<text x=\"{x}\" y=\"{ty}\" font-size=\"12\" text-anchor=\"end\">{name}</text>\n",
            x = left - 8.0,
            ty = y + bar_h - 6.0,
            name = escape(name),
        ));
        svg.push_str(&format!(
            "<rect x=\"{x0:.2}\" y=\"{y}\" width=\"{w:.2}\" height=\"{bar_h}\" fill=\"{color}\"/>\n",
            w = (x1 - x0).max(0.75),
        ));
        svg.push_str(&format!(
            "<text x=\"{x:.2}\" y=\"{ty}\" font-size=\"11\">{phi:+.3}</text>\n",
            x = x1 + 5.0,
            ty = y + bar_h - 6.0,
        ));
        y += bar_h + gap;
    }
    marker(&mut svg, y, "prediction", waterfall.prediction);
    y += bar_h + gap;
    svg.push_str(&format!(
        "<text x=\"{x}\" y=\"{y}\" font-size=\"12\" text-anchor=\"middle\">{unit}</text>\n",
        x = left + plot_w / 2.0,
        y = y + 24.0,
    ));
    svg.push_str("</svg>\n");
    svg
}
