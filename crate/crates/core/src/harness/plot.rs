use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::metrics::{read_metrics_file, round_curve, Episodes, Interval, Metric};
use crate::error::{Error, Result};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 170.0;
const MARGIN_Y: f64 = 40.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

/// One labeled mean ± CI curve.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(usize, Interval)>,
}

/// Reads each labeled CSV and reduces it to a per-round curve of `metric`.
pub fn load_series(inputs: &[(String, PathBuf)], metric: Metric, episodes: Episodes) -> Result<Vec<Series>> {
    inputs
        .iter()
        .map(|(label, path)| {
            let rows = read_metrics_file(path)?;
            Ok(Series {
                label: label.clone(),
                points: round_curve(&rows, metric, episodes),
            })
        })
        .collect()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders the curves as an SVG line plot with a shaded CI band and a legend.
pub fn render_svg(series: &[Series], metric: Metric) -> String {
    let pts = series.iter().flat_map(|s| s.points.iter());
    let (mut x_max, mut y_min, mut y_max) = (1usize, f64::INFINITY, f64::NEG_INFINITY);
    for (r, iv) in pts {
        if !iv.mean.is_finite() {
            continue;
        }
        x_max = x_max.max(*r);
        y_min = y_min.min(iv.lower());
        y_max = y_max.max(iv.upper());
    }
    if !y_min.is_finite() {
        (y_min, y_max) = (0.0, 1.0);
    }
    if y_max - y_min < 1e-12 {
        y_max = y_min + 1.0;
    }
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - 2.0 * MARGIN_Y;
    let sx = |r: usize| MARGIN_LEFT + plot_w * r as f64 / x_max as f64;
    let sy = |v: f64| MARGIN_Y + plot_h * (1.0 - (v - y_min) / (y_max - y_min));

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<rect x="{MARGIN_LEFT}" y="{MARGIN_Y}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );
    for i in 0..=4 {
        let v = y_min + (y_max - y_min) * i as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="end">{v:.3}</text>"#,
            MARGIN_LEFT - 6.0,
            sy(v) + 4.0
        );
        let r = x_max * i / 4;
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle">{r}</text>"#,
            sx(r),
            HEIGHT - MARGIN_Y + 16.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">round</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 6.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="14" y="{:.1}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {:.1})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        metric
    );
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let finite: Vec<&(usize, Interval)> = s.points.iter().filter(|(_, iv)| iv.mean.is_finite()).collect();
        if !finite.is_empty() {
            let mut band = String::new();
            for (r, iv) in &finite {
                let _ = write!(band, "{:.2},{:.2} ", sx(*r), sy(iv.upper()));
            }
            for (r, iv) in finite.iter().rev() {
                let _ = write!(band, "{:.2},{:.2} ", sx(*r), sy(iv.lower()));
            }
            let _ = writeln!(
                svg,
                r#"<polygon class="ci-band" points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
                band.trim_end()
            );
            let line: Vec<String> = finite
                .iter()
                .map(|(r, iv)| format!("{:.2},{:.2}", sx(*r), sy(iv.mean)))
                .collect();
            let _ = writeln!(
                svg,
                r#"<polyline class="mean" points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                line.join(" ")
            );
        }
        let ly = MARGIN_Y + 18.0 * i as f64 + 10.0;
        let lx = WIDTH - MARGIN_RIGHT + 14.0;
        let _ = writeln!(
            svg,
            r#"<g class="legend-entry"><line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="3"/><text x="{:.1}" y="{:.1}" font-size="12">{}</text></g>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Reads labeled metric CSVs and writes one SVG plot of `metric` per round.
pub fn emit_plots(
    inputs: &[(String, PathBuf)],
    metric: Metric,
    episodes: Option<Episodes>,
    out: impl AsRef<Path>,
) -> Result<()> {
    if inputs.is_empty() {
        return Err(Error::Usage("no metric files to plot".into()));
    }
    let series = load_series(inputs, metric, episodes.unwrap_or(Episodes::All))?;
    let out = out.as_ref();
    std::fs::write(out, render_svg(&series, metric)).map_err(|e| Error::io(out, e))
}
