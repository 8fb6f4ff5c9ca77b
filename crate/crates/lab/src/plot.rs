//! Regret plots: a whitespace-separated data file for gnuplot and a small
//! standalone SVG line chart of mean regret against `t`.

use std::fmt::Write as _;

use crate::experiment::ExperimentSummary;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 56.0;

/// Columns `t mean_regret std_regret mean_pseudo_regret std_pseudo_regret`.
pub fn data_file(summary: &ExperimentSummary) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# {} / {}", summary.environment, summary.agent.kind.name());
    out.push_str("# t mean_regret std_regret mean_pseudo_regret std_pseudo_regret\n");
    for i in 0..summary.checkpoints.len() {
        let _ = writeln!(
            out,
            "{} {} {} {} {}",
            summary.checkpoints[i],
            summary.mean_regret[i],
            summary.std_regret[i],
            summary.mean_pseudo_regret[i],
            summary.std_pseudo_regret[i]
        );
    }
    out
}

fn axis_label(x: f64) -> String {
    if x != 0.0 && (x.abs() >= 1e5 || x.abs() < 1e-2) {
        format!("{x:.2e}")
    } else {
        let s = format!("{x:.2}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

pub fn svg(summary: &ExperimentSummary) -> String {
    let ts: Vec<f64> = summary.checkpoints.iter().map(|&t| t as f64).collect();
    let ys = &summary.mean_regret;
    let (x_lo, x_hi) = (0.0, ts.iter().copied().fold(1.0, f64::max));
    let y_lo = ys.iter().copied().fold(0.0, f64::min);
    let mut y_hi = ys.iter().copied().fold(0.0, f64::max);
    if y_hi <= y_lo {
        y_hi = y_lo + 1.0;
    }
    let px = |x: f64| MARGIN + (x - x_lo) / (x_hi - x_lo) * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - (y - y_lo) / (y_hi - y_lo) * (HEIGHT - 2.0 * MARGIN);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let (left, right, top, bottom) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(
        out,
        r#"<path d="M{left} {top} L{left} {bottom} L{right} {bottom}" fill="none" stroke="black"/>"#
    );
    if y_lo < 0.0 {
        let z = py(0.0);
        let _ = writeln!(out, r##"<line x1="{left}" y1="{z:.2}" x2="{right}" y2="{z:.2}" stroke="#bbb" stroke-dasharray="4 3"/>"##);
    }
    let points: Vec<String> = ts.iter().zip(ys).map(|(&x, &y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
    let _ = writeln!(out, r##"<polyline points="{}" fill="none" stroke="#1f6fb4" stroke-width="2"/>"##, points.join(" "));
    let _ = writeln!(out, r#"<text x="{left}" y="{}" text-anchor="middle">{}</text>"#, bottom + 18.0, axis_label(x_lo));
    let _ = writeln!(out, r#"<text x="{right}" y="{}" text-anchor="middle">{}</text>"#, bottom + 18.0, axis_label(x_hi));
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, left - 6.0, bottom, axis_label(y_lo));
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, left - 6.0, top + 4.0, axis_label(y_hi));
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">t</text>"#, WIDTH / 2.0, HEIGHT - 16.0);
    let _ = writeln!(
        out,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">mean regret</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );
    let title = format!("{} / {} ({} seeds)", summary.environment, summary.agent.kind.name(), summary.seeds.len());
    let _ = writeln!(out, r#"<text x="{}" y="24" text-anchor="middle">{}</text>"#, WIDTH / 2.0, escape(&title));
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels() {
        assert_eq!(axis_label(0.0), "0");
        assert_eq!(axis_label(2.5), "2.5");
        assert_eq!(axis_label(262144.0), "2.62e5");
        assert_eq!(escape("a<b&c"), "a&lt;b&amp;c");
    }
}
