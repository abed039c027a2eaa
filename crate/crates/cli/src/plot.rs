//! Deterministic SVG charts: fixed 720x480 canvas, decade ticks on log axes.

use crate::error::{CliError, Result};
use crate::io::read_rows;
use crate::tables::{read_fit_rows, read_loss_curves};
use optlab::scaling::{fit_loss_power_law, CurveFit, PowerLawInit, PowerLawKind, Saturation};
use serde::Deserialize;
use std::fmt::Write as _;
use std::path::Path;

const W: f64 = 720.0;
const H: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    RiskCurves,
    FitOverlay,
    MultiplierBars,
}

struct Series {
    label: String,
    points: Vec<(f64, f64)>,
    style: Style,
}

#[derive(Clone, Copy, PartialEq)]
enum Style {
    Line,
    Markers,
    Dashed,
}

/// Log-scale axis over whole decades.
struct LogAxis {
    lo: i32,
    hi: i32,
}

impl LogAxis {
    fn covering(values: impl Iterator<Item = f64>) -> Option<Self> {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|v| v.is_finite() && *v > 0.0) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            return None;
        }
        let lo = lo.log10().floor() as i32;
        let hi = (hi.log10().ceil() as i32).max(lo + 1);
        Some(Self { lo, hi })
    }

    fn frac(&self, v: f64) -> f64 {
        (v.log10() - self.lo as f64) / (self.hi - self.lo) as f64
    }

    /// At most ~8 labelled decades.
    fn ticks(&self) -> Vec<i32> {
        let step = ((self.hi - self.lo) as f64 / 8.0).ceil().max(1.0) as i32;
        (self.lo..=self.hi)
            .filter(|k| (k - self.lo) % step == 0)
            .collect()
    }
}

fn px(fx: f64) -> f64 {
    LEFT + fx * (W - LEFT - RIGHT)
}

fn py(fy: f64) -> f64 {
    H - BOTTOM - fy * (H - TOP - BOTTOM)
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn header(svg: &mut String, title: &str) {
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="18" text-anchor="middle" font-size="14">{}</text>"#,
        px(0.5),
        esc(title)
    );
    let _ = writeln!(
        svg,
        r#"<rect x="{LEFT}" y="{TOP}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - LEFT - RIGHT,
        H - TOP - BOTTOM
    );
}

fn legend(svg: &mut String, entries: &[(String, &str, Style)]) {
    for (i, (label, color, style)) in entries.iter().enumerate() {
        let y = TOP + 10.0 + 18.0 * i as f64;
        let x = W - RIGHT + 12.0;
        match style {
            Style::Markers => {
                let _ = writeln!(
                    svg,
                    r#"<circle cx="{}" cy="{y}" r="3" fill="{color}"/>"#,
                    x + 10.0
                );
            }
            _ => {
                let dash = if *style == Style::Dashed {
                    r#" stroke-dasharray="6 4""#
                } else {
                    ""
                };
                let _ = writeln!(
                    svg,
                    r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="2"{dash}/>"#,
                    x + 20.0
                );
            }
        }
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}">{}</text>"#,
            x + 26.0,
            y + 4.0,
            esc(label)
        );
    }
}

fn log_log_chart(
    title: &str,
    xlabel: &str,
    ylabel: &str,
    series: &[Series],
    colors: &[&str],
) -> Result<String> {
    let xs = LogAxis::covering(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let ys = LogAxis::covering(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let (Some(xa), Some(ya)) = (xs, ys) else {
        return Err(CliError::NoData(
            "nothing positive and finite to plot".into(),
        ));
    };
    let mut svg = String::new();
    header(&mut svg, title);
    for k in xa.ticks() {
        let x = px(xa.frac(10f64.powi(k)));
        let _ = writeln!(
            svg,
            r##"<line x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{}" stroke="#ddd"/>"##,
            H - BOTTOM
        );
        let _ = writeln!(
            svg,
            r#"<text x="{x:.2}" y="{}" text-anchor="middle">1e{k}</text>"#,
            H - BOTTOM + 16.0
        );
    }
    for k in ya.ticks() {
        let y = py(ya.frac(10f64.powi(k)));
        let _ = writeln!(
            svg,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#ddd"/>"##,
            W - RIGHT
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{:.2}" text-anchor="end">1e{k}</text>"#,
            LEFT - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#,
        px(0.5),
        H - 20.0,
        esc(xlabel)
    );
    let _ = writeln!(
        svg,
        r#"<text x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">{}</text>"#,
        py(0.5),
        py(0.5),
        esc(ylabel)
    );
    let mut entries = Vec::new();
    for (s, color) in series.iter().zip(colors) {
        let pts: Vec<(f64, f64)> = s
            .points
            .iter()
            .filter(|p| p.0 > 0.0 && p.1 > 0.0 && p.0.is_finite() && p.1.is_finite())
            .map(|&(x, y)| (px(xa.frac(x)), py(ya.frac(y))))
            .collect();
        match s.style {
            Style::Markers => {
                for (x, y) in &pts {
                    let _ = writeln!(
                        svg,
                        r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{color}"/>"#
                    );
                }
            }
            style => {
                let path: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
                let dash = if style == Style::Dashed {
                    r#" stroke-dasharray="6 4""#
                } else {
                    ""
                };
                let _ = writeln!(
                    svg,
                    r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#,
                    path.join(" ")
                );
            }
        }
        entries.push((s.label.clone(), *color, s.style));
    }
    legend(&mut svg, &entries);
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("series")
        .to_string()
}

#[derive(Deserialize)]
struct RiskRow {
    iteration: f64,
    risk: f64,
}

#[derive(Deserialize)]
struct MultRow {
    compute: f64,
    multiplier: f64,
}

pub fn plot(kind: PlotKind, inputs: &[&Path]) -> Result<String> {
    if inputs.is_empty() {
        return Err(CliError::NoData("no input CSVs".into()));
    }
    match kind {
        PlotKind::RiskCurves => {
            let mut series = Vec::new();
            for p in inputs {
                let rows: Vec<RiskRow> = read_rows(p)?;
                series.push(Series {
                    label: stem(p),
                    points: rows.iter().map(|r| (r.iteration, r.risk)).collect(),
                    style: Style::Line,
                });
            }
            log_log_chart(
                "population risk",
                "iteration",
                "risk",
                &series,
                &PALETTE.repeat(1 + series.len() / 8),
            )
        }
        PlotKind::FitOverlay => {
            let curves = read_loss_curves(inputs[0])?;
            let fits: Vec<(String, CurveFit)> = match inputs.get(1) {
                Some(fit_path) => {
                    let table = read_fit_rows(fit_path)?;
                    curves
                        .iter()
                        .map(|c| {
                            table
                                .get(&c.tag)
                                .map(|k| (c.tag.clone(), *k))
                                .ok_or_else(|| {
                                    CliError::validation(
                                        fit_path.display().to_string(),
                                        format!("no fit row for tag {}", c.tag),
                                    )
                                })
                        })
                        .collect::<Result<_>>()?
                }
                None => {
                    let fit = fit_loss_power_law(
                        &curves,
                        PowerLawKind::Broken,
                        Saturation::Shared,
                        &PowerLawInit::default(),
                    )
                    .map_err(|e| CliError::validation("input", e))?;
                    fit.tags.into_iter().zip(fit.curves).collect()
                }
            };
            let mut series = Vec::new();
            let mut colors = Vec::new();
            for (i, (curve, (tag, k))) in curves.iter().zip(&fits).enumerate() {
                let color = PALETTE[i % PALETTE.len()];
                let (lo, hi) = curve
                    .points
                    .iter()
                    .fold((f64::INFINITY, 0.0f64), |(lo, hi), p| {
                        (lo.min(p.c), hi.max(p.c))
                    });
                series.push(Series {
                    label: tag.clone(),
                    points: curve.points.iter().map(|p| (p.c, p.loss)).collect(),
                    style: Style::Markers,
                });
                let n = 100;
                series.push(Series {
                    label: format!("{tag} fit"),
                    points: (0..n)
                        .map(|j| {
                            let c = (lo.ln() + (hi / lo).ln() * j as f64 / (n - 1) as f64).exp();
                            (c, k.eval(c))
                        })
                        .collect(),
                    style: Style::Dashed,
                });
                colors.extend([color, color]);
            }
            log_log_chart("loss vs compute", "compute (PFH)", "loss", &series, &colors)
        }
        PlotKind::MultiplierBars => {
            let mut bars = Vec::new();
            for p in inputs {
                let rows: Vec<MultRow> = read_rows(p)?;
                let label = stem(p);
                for r in rows {
                    bars.push((format!("{label} C={}", r.compute), r.multiplier));
                }
            }
            Ok(bar_chart(&bars))
        }
    }
}

fn bar_chart(bars: &[(String, f64)]) -> String {
    let top = bars
        .iter()
        .map(|b| b.1)
        .filter(|v| v.is_finite())
        .fold(1.0f64, f64::max)
        * 1.1;
    let mut svg = String::new();
    header(&mut svg, "compute multiplier");
    let n = bars.len() as f64;
    let slot = (W - LEFT - RIGHT) / n;
    for i in 0..=5 {
        let v = top * i as f64 / 5.0;
        let y = py(v / top);
        let _ = writeln!(
            svg,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#ddd"/>"##,
            W - RIGHT
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{:.2}" text-anchor="end">{v:.3}</text>"#,
            LEFT - 6.0,
            y + 4.0
        );
    }
    let one = py(1.0 / top);
    let _ = writeln!(
        svg,
        r#"<line x1="{LEFT}" y1="{one:.2}" x2="{}" y2="{one:.2}" stroke="black" stroke-dasharray="6 4"/>"#,
        W - RIGHT
    );
    for (i, (label, v)) in bars.iter().enumerate() {
        let x = LEFT + slot * (i as f64 + 0.15);
        let h = if v.is_finite() { v / top } else { 0.0 };
        let _ = writeln!(
            svg,
            r#"<rect x="{x:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"><title>{}: {v}</title></rect>"#,
            py(h),
            slot * 0.7,
            py(0.0) - py(h),
            PALETTE[0],
            esc(label)
        );
        let cx = x + slot * 0.35;
        let _ = writeln!(
            svg,
            r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle" font-size="10">{v:.3}</text>"#,
            py(h) - 4.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{cx:.2}" y="{}" text-anchor="middle" font-size="10">{}</text>"#,
            H - BOTTOM + 14.0,
            esc(label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}
