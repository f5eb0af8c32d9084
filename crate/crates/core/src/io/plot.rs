//! Self-contained SVG renderings of traces, selection curves, factors and
//! event timelines.

use std::fmt::Write;

use crate::pipeline::EventReport;
use crate::selection::KSelectionReport;
use crate::tensor::DenseMatrix;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

pub struct Series<'a> {
    pub name: &'a str,
    pub values: Vec<f64>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn header(out: &mut String, title: &str) {
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = write!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = write!(
        out,
        r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
}

fn finite_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if lo > hi {
        (0.0, 1.0)
    } else if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

/// Line chart of several series against shared x values. Non-finite points
/// break the line.
pub fn line_plot(title: &str, x_label: &str, xs: &[f64], series: &[Series]) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let (x0, x1) = finite_range(xs.iter().copied());
    let (y0, y1) = finite_range(series.iter().flat_map(|s| s.values.iter().copied()));
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);
    let _ = write!(
        out,
        r#"<g stroke="black" fill="none"><line x1="{MARGIN}" y1="{b}" x2="{r}" y2="{b}"/><line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{b}"/></g>"#,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN
    );
    let _ = write!(
        out,
        r#"<g font-family="sans-serif" font-size="11"><text x="{MARGIN}" y="{}">{x0:.4}</text><text x="{}" y="{}" text-anchor="end">{x1:.4}</text><text x="4" y="{}">{y0:.4}</text><text x="4" y="{}">{y1:.4}</text><text x="{}" y="{}" text-anchor="middle">{}</text></g>"#,
        HEIGHT - MARGIN + 16.0,
        WIDTH - MARGIN,
        HEIGHT - MARGIN + 16.0,
        HEIGHT - MARGIN,
        MARGIN,
        WIDTH / 2.0,
        HEIGHT - 10.0,
        escape(x_label)
    );
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let _ = write!(out, r#"<g class="series" data-series="{}">"#, escape(s.name));
        let mut segment: Vec<String> = Vec::new();
        let flush = |segment: &mut Vec<String>, out: &mut String| {
            if !segment.is_empty() {
                let _ = write!(
                    out,
                    r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                    segment.join(" ")
                );
                segment.clear();
            }
        };
        for (x, y) in xs.iter().zip(&s.values) {
            if x.is_finite() && y.is_finite() {
                segment.push(format!("{:.2},{:.2}", px(*x), py(*y)));
            } else {
                flush(&mut segment, &mut out);
            }
        }
        flush(&mut segment, &mut out);
        let _ = write!(
            out,
            r#"<text x="{}" y="{}" fill="{color}" font-family="sans-serif" font-size="12">{}</text></g>"#,
            WIDTH - MARGIN + 4.0,
            MARGIN + 14.0 * i as f64,
            escape(s.name)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Grayscale heatmap, darker is larger; row 0 at the top.
pub fn heatmap(title: &str, m: &DenseMatrix) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let (lo, hi) = finite_range(m.data().iter().copied());
    let cw = (WIDTH - 2.0 * MARGIN) / m.cols().max(1) as f64;
    let ch = (HEIGHT - 2.0 * MARGIN) / m.rows().max(1) as f64;
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            let v = m.get(i, j);
            let level = if v.is_finite() { 255.0 * (1.0 - (v - lo) / (hi - lo)) } else { 255.0 };
            let g = level.round().clamp(0.0, 255.0) as u8;
            let _ = write!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="rgb({g},{g},{g})"/>"#,
                MARGIN + j as f64 * cw,
                MARGIN + i as f64 * ch,
                cw,
                ch
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

pub fn objective_trace(title: &str, trace: &[f64]) -> String {
    let xs: Vec<f64> = (0..trace.len()).map(|i| i as f64).collect();
    line_plot(
        title,
        "evaluation",
        &xs,
        &[Series {
            name: "objective",
            values: trace.to_vec(),
        }],
    )
}

/// Minimum and mean silhouette plus mean relative error against `k`.
pub fn selection_curve(report: &KSelectionReport) -> String {
    let xs: Vec<f64> = report.records.iter().map(|r| r.k as f64).collect();
    let pick = |f: fn(&crate::selection::KRecord) -> f64| report.records.iter().map(f).collect();
    let title = match report.selected_k {
        Some(k) => format!("Latent dimension k estimation (selected k = {k})"),
        None => "Latent dimension k estimation (no admissible k)".to_string(),
    };
    line_plot(
        &title,
        "k",
        &xs,
        &[
            Series {
                name: "min_silhouette",
                values: pick(|r| r.min_silhouette),
            },
            Series {
                name: "mean_silhouette",
                values: pick(|r| r.mean_silhouette),
            },
            Series {
                name: "mean_relative_error",
                values: pick(|r| r.mean_relative_error),
            },
        ],
    )
}

/// One line per column of `m` (e.g. spectral signatures in `W`).
pub fn columns_plot(title: &str, x_label: &str, m: &DenseMatrix) -> String {
    let xs: Vec<f64> = (0..m.rows()).map(|i| i as f64).collect();
    let names: Vec<String> = (0..m.cols()).map(|j| format!("component {j}")).collect();
    let series: Vec<Series> = (0..m.cols())
        .map(|j| Series {
            name: &names[j],
            values: m.column(j),
        })
        .collect();
    line_plot(title, x_label, &xs, &series)
}

/// One line per row of `m` (e.g. activation traces in `H`).
pub fn rows_plot(title: &str, x_label: &str, m: &DenseMatrix) -> String {
    columns_plot(title, x_label, &m.transpose())
}

/// Horizontal bars, one lane per source, spanning each event interval.
pub fn event_timeline(report: &EventReport, duration: f64) -> String {
    let mut out = String::new();
    header(&mut out, &format!("Events ({} sources)", report.k_used));
    let lanes = report.k_used.max(1) as f64;
    let lane_h = (HEIGHT - 2.0 * MARGIN) / lanes;
    let scale = (WIDTH - 2.0 * MARGIN) / duration.max(f64::MIN_POSITIVE);
    let _ = write!(
        out,
        r#"<line x1="{MARGIN}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><text x="{r}" y="{t}" text-anchor="end" font-family="sans-serif" font-size="11">{duration:.3} {}</text>"#,
        escape(&report.time_unit),
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN,
        t = HEIGHT - MARGIN + 16.0
    );
    for e in &report.events {
        let color = PALETTE[e.source % PALETTE.len()];
        let _ = write!(
            out,
            r#"<rect class="event" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{color}"><title>source {} [{}, {}] peak {:.3}</title></rect>"#,
            MARGIN + e.start_time * scale,
            MARGIN + e.source as f64 * lane_h + 0.15 * lane_h,
            ((e.end_time - e.start_time) * scale).max(1.0),
            0.7 * lane_h,
            e.source,
            e.start_time,
            e.end_time,
            e.peak_score
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::selection::{KRecord, PerturbConfig, SelectionRule};

    fn record(k: usize, min: f64) -> KRecord {
        KRecord {
            k,
            min_silhouette: min,
            mean_silhouette: min,
            mean_relative_error: 1.0 / k as f64,
            failed_replicas: 0,
            valid: min.is_finite(),
            single_cluster: k == 1,
        }
    }

    #[test]
    fn selection_curve_has_one_series_per_statistic() {
        let report = KSelectionReport {
            records: vec![record(1, 1.0), record(2, 0.9), record(3, f64::NAN)],
            selected_k: Some(2),
            rule: SelectionRule::default(),
            perturb: PerturbConfig::default(),
        };
        let svg = selection_curve(&report);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        for name in ["min_silhouette", "mean_silhouette", "mean_relative_error"] {
            assert_eq!(svg.matches(&format!(r#"data-series="{name}""#)).count(), 1);
        }
        assert!(!svg.contains("NaN"));
    }

    #[test]
    fn heatmap_has_one_cell_per_entry() {
        let m = DenseMatrix::from_fn(3, 4, |i, j| (i * j) as f64);
        assert_eq!(heatmap("h", &m).matches("<rect x=").count(), 12);
    }

    #[test]
    fn titles_are_escaped() {
        let svg = objective_trace("a<b & c", &[3.0, 2.0, 1.0]);
        assert!(svg.contains("a&lt;b &amp; c"));
    }
}
