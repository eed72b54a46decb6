//! SVG output: fitted-curve overlays and bootstrap histograms.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use funcmetric::inference::quantile;

use crate::error::CliError;
use crate::report::{AnalysisReport, WindowMetric};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];
const HIST_BINS: usize = 30;

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - 2.0 * MARGIN)
    }

    fn axes(&self, svg: &mut String, x_label: &str, y_label: &str) {
        let (l, r) = (MARGIN, WIDTH - MARGIN);
        let (t, b) = (MARGIN, HEIGHT - MARGIN);
        let _ = writeln!(
            svg,
            r#"<rect x="{l}" y="{t}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            r - l,
            b - t
        );
        for i in 0..=4 {
            let fx = self.x0 + (self.x1 - self.x0) * i as f64 / 4.0;
            let fy = self.y0 + (self.y1 - self.y0) * i as f64 / 4.0;
            let _ = writeln!(
                svg,
                r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle">{}</text>"#,
                self.px(fx),
                b + 16.0,
                tick(fx)
            );
            let _ = writeln!(
                svg,
                r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="end">{}</text>"#,
                l - 6.0,
                self.py(fy) + 4.0,
                tick(fy)
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">{x_label}</text>"#,
            WIDTH / 2.0,
            HEIGHT - 12.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="14" y="{:.1}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {:.1})">{y_label}</text>"#,
            HEIGHT / 2.0,
            HEIGHT / 2.0
        );
    }

    fn vline(&self, svg: &mut String, x: f64, color: &str, dash: &str) {
        let _ = writeln!(
            svg,
            r#"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="{color}" stroke-dasharray="{dash}"/>"#,
            MARGIN,
            HEIGHT - MARGIN,
            x = self.px(x)
        );
    }
}

fn tick(v: f64) -> String {
    if v.abs() >= 100.0 || v == v.round() {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn open_svg(title: &str) -> String {
    let mut svg = format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    svg.push('\n');
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="24" font-size="14" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    svg
}

/// Overlay of all fitted curves with observed proportions and window boundaries.
pub fn curve_overlay_svg(report: &AnalysisReport) -> Option<String> {
    if report.fits.is_empty() {
        return None;
    }
    let t_obs = report
        .fits
        .iter()
        .flat_map(|f| f.observed.iter().map(|o| o[0]))
        .chain(report.metrics.iter().map(|m| m.b))
        .fold(0.0f64, f64::max);
    let frame = Frame {
        x0: 0.0,
        x1: (t_obs * 1.05).max(1.0),
        y0: 0.0,
        y1: 1.0,
    };
    let mut svg = open_svg("Fitted response-rate curves");
    frame.axes(&mut svg, "time", "response rate");
    for window in &report.metrics {
        frame.vline(&mut svg, window.a, "gray", "4 3");
        frame.vline(&mut svg, window.b, "gray", "4 3");
    }
    for (k, fit) in report.fits.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let points: Vec<String> = (0..=300)
            .filter_map(|i| {
                let t = frame.x1 * i as f64 / 300.0;
                fit.curve
                    .eval(t)
                    .ok()
                    .map(|y| format!("{:.2},{:.2}", frame.px(t), frame.py(y)))
            })
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            points.join(" ")
        );
        for o in &fit.observed {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                frame.px(o[0]),
                frame.py(o[1])
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-size="12" fill="{color}">{} ({})</text>"#,
            MARGIN + 10.0,
            MARGIN + 16.0 + 16.0 * k as f64,
            escape(&fit.arm),
            escape(&fit.model)
        );
    }
    svg.push_str("</svg>\n");
    Some(svg)
}

/// Histogram of bootstrap replicates with 2.5%, 50% and 97.5% percentile lines.
pub fn bootstrap_histogram_svg(metric: &WindowMetric) -> Option<String> {
    let boot = metric.bootstrap.as_ref()?;
    let values = &boot.values;
    if values.is_empty() {
        return None;
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1e-9_f64.max(lo.abs() * 1e-6) };
    let mut counts = [0usize; HIST_BINS];
    for &v in values {
        let k = (((v - lo) / span) * HIST_BINS as f64).floor() as usize;
        counts[k.min(HIST_BINS - 1)] += 1;
    }
    let top = *counts.iter().max().unwrap_or(&1) as f64;
    let frame = Frame {
        x0: lo,
        x1: lo + span,
        y0: 0.0,
        y1: top * 1.1,
    };
    let title = format!(
        "Bootstrap L_{} on ({}, {}): {} vs {}",
        metric.p, metric.a, metric.b, metric.arm1, metric.arm2
    );
    let mut svg = open_svg(&title);
    frame.axes(&mut svg, "metric value", "count");
    let bin = span / HIST_BINS as f64;
    for (k, &c) in counts.iter().enumerate() {
        let x = lo + bin * k as f64;
        let _ = writeln!(
            svg,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#9ecae1" stroke="white"/>"##,
            frame.px(x),
            frame.py(c as f64),
            frame.px(x + bin) - frame.px(x),
            frame.py(0.0) - frame.py(c as f64)
        );
    }
    for q in [0.025, 0.5, 0.975] {
        let v = quantile(values, q).ok()?;
        let _ = writeln!(svg, r#"<!-- percentile {q} = {v} -->"#);
        frame.vline(&mut svg, v, "#d62728", if q == 0.5 { "none" } else { "6 3" });
    }
    svg.push_str("</svg>\n");
    Some(svg)
}

/// Writes all plots the report supports into `out_dir`. Returns the files written
/// and any warnings.
pub fn emit_plots(report: &AnalysisReport, out_dir: &Path) -> Result<(Vec<PathBuf>, Vec<String>), CliError> {
    let mut files = Vec::new();
    let mut write = |name: String, body: String| -> Result<(), CliError> {
        let path = out_dir.join(name);
        std::fs::write(&path, body).map_err(|e| CliError::io(&path, e))?;
        files.push(path);
        Ok(())
    };
    if let Some(svg) = curve_overlay_svg(report) {
        write("curves.svg".into(), svg)?;
    }
    for (i, m) in report.metrics.iter().enumerate() {
        if let Some(svg) = bootstrap_histogram_svg(m) {
            write(format!("bootstrap_{}_{}_{}.svg", i + 1, m.a, m.b), svg)?;
        }
    }
    let warnings = if files.is_empty() {
        vec!["report has no fitted curves or bootstrap replicates; no plots written".to_string()]
    } else {
        Vec::new()
    };
    Ok((files, warnings))
}
