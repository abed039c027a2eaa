//! Input row types and the CSV tables each analysis writes. The standalone
//! subcommands and the config-driven kinds share these, so their outputs are
//! byte-identical.

use crate::error::{CliError, Result};
use crate::io::{read_rows, render_csv};
use optlab::divergence::{
    classify_stability, csv_rows, simulate_z, ZProcessConfig, ZResult, CSV_HEADER,
};
use optlab::plrf::RunRecord;
use optlab::scaling::*;
use serde::Deserialize;
use std::collections::BTreeMap;
use std::path::Path;

fn f(x: f64) -> String {
    format!("{x}")
}

fn fit_error(path: &str, e: FitError) -> CliError {
    match e {
        FitError::Invalid { field, reason } => {
            CliError::validation(format!("{path}.{field}"), reason)
        }
        other => CliError::validation(path, other),
    }
}

#[derive(Debug, Deserialize)]
struct LrRow {
    p: f64,
    lr: f64,
    #[serde(default)]
    weight: Option<f64>,
}

pub fn read_lr_points(path: &Path) -> Result<Vec<LrPoint>> {
    let rows: Vec<LrRow> = read_rows(path)?;
    Ok(rows
        .into_iter()
        .map(|r| LrPoint {
            p: r.p,
            lr: r.lr,
            weight: r.weight.unwrap_or(1.0),
        })
        .collect())
}

pub const LR_FIT_HEADER: [&str; 6] = ["a", "b", "d", "loss", "iterations", "converged"];

pub fn lr_fit_table(points: &[LrPoint]) -> Result<(SaturatedLrFit, String)> {
    let fit =
        fit_saturated_lr(points, &LrFitOptions::default()).map_err(|e| fit_error("input", e))?;
    let row = vec![
        f(fit.a),
        f(fit.b),
        f(fit.d),
        f(fit.loss),
        fit.iterations.to_string(),
        fit.converged.to_string(),
    ];
    Ok((fit, render_csv(&LR_FIT_HEADER, [row])))
}

pub fn lr_band_table(
    points: &[LrPoint],
    queries: &[f64],
    n_boot: usize,
    seed: u64,
) -> Result<(BootstrapBand, String)> {
    if queries.is_empty() {
        return Err(CliError::validation(
            "queries",
            "bootstrap needs at least one query size",
        ));
    }
    let band = bootstrap_lr_fit(points, queries, n_boot, seed, &LrFitOptions::default())
        .map_err(|e| fit_error("bootstrap", e))?;
    let rows = (0..band.queries.len()).map(|i| {
        vec![
            f(band.queries[i]),
            f(band.point[i]),
            f(band.lo[i]),
            f(band.hi[i]),
        ]
    });
    let mut csv = render_csv(&["p", "lr", "lo", "hi"], rows);
    csv.push_str(&format!(
        "# d band [{}, {}] from {} replicates\n",
        band.d_band.0, band.d_band.1, band.replicates
    ));
    Ok((band, csv))
}

#[derive(Debug, Deserialize)]
struct LossRow {
    tag: String,
    c: f64,
    loss: f64,
}

/// Curves in order of first appearance of their tag.
pub fn read_loss_curves(path: &Path) -> Result<Vec<LossCurve>> {
    let rows: Vec<LossRow> = read_rows(path)?;
    let mut curves: Vec<LossCurve> = Vec::new();
    for r in rows {
        match curves.iter_mut().find(|c| c.tag == r.tag) {
            Some(c) => c.points.push(LossPoint {
                c: r.c,
                loss: r.loss,
            }),
            None => curves.push(LossCurve {
                tag: r.tag,
                points: vec![LossPoint {
                    c: r.c,
                    loss: r.loss,
                }],
            }),
        }
    }
    Ok(curves)
}

pub const LOSS_FIT_HEADER: [&str; 7] = ["tag", "a", "b", "c", "e", "f", "r2"];

pub fn loss_fit_csv(fit: &LossFit) -> String {
    let rows = fit
        .tags
        .iter()
        .zip(&fit.curves)
        .map(|(t, k)| vec![t.clone(), f(k.a), f(k.b), f(k.c), f(k.e), f(k.f), f(k.r2)]);
    render_csv(&LOSS_FIT_HEADER, rows)
}

pub fn loss_fit_table(
    curves: &[LossCurve],
    kind: PowerLawKind,
    saturation: Saturation,
    init: &PowerLawInit,
) -> Result<(LossFit, String)> {
    let fit =
        fit_loss_power_law(curves, kind, saturation, init).map_err(|e| fit_error("input", e))?;
    let csv = loss_fit_csv(&fit);
    Ok((fit, csv))
}

#[derive(Debug, Deserialize)]
pub struct FitRow {
    pub tag: String,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub e: f64,
    pub f: f64,
}

#[derive(Debug, Deserialize)]
struct ComputeLossRow {
    c: f64,
    loss: f64,
}

pub fn read_compute_loss(path: &Path) -> Result<Vec<(f64, f64)>> {
    let rows: Vec<ComputeLossRow> = read_rows(path)?;
    Ok(rows.into_iter().map(|r| (r.c, r.loss)).collect())
}

pub const MULTIPLIER_HEADER: [&str; 5] = [
    "compute",
    "loss",
    "baseline_compute",
    "multiplier",
    "efficiency",
];

pub fn multiplier_table(
    baseline: &[(f64, f64)],
    target: &[(f64, f64)],
    interp: Interpolation,
) -> Result<String> {
    let points =
        compute_multiplier(baseline, target, interp).map_err(|e| fit_error("baseline", e))?;
    let rows = points.iter().map(|p| {
        vec![
            f(p.compute),
            f(p.loss),
            f(p.baseline_compute),
            f(p.multiplier),
            f(p.efficiency),
        ]
    });
    Ok(render_csv(&MULTIPLIER_HEADER, rows))
}

#[derive(Debug, Deserialize)]
struct EigRow {
    eigenvalue: f64,
}

/// Eigenvalues in file order; the fit sorts nothing, so pass them descending.
pub fn read_eigenvalues(path: &Path) -> Result<Vec<f64>> {
    let rows: Vec<EigRow> = read_rows(path)?;
    Ok(rows.into_iter().map(|r| r.eigenvalue).collect())
}

pub fn spectrum_table(eigs: &[f64], first: Option<usize>, last: Option<usize>) -> Result<String> {
    let first = first.unwrap_or(1);
    let last = last.unwrap_or(eigs.len());
    let two_rho = fit_spectrum_exponent(eigs, first, last).map_err(|e| fit_error("spectrum", e))?;
    Ok(render_csv(
        &["first", "last", "two_rho", "rho"],
        [vec![
            first.to_string(),
            last.to_string(),
            f(two_rho),
            f(two_rho / 2.0),
        ]],
    ))
}

pub const RUN_HEADER: [&str; 3] = ["iteration", "samples", "risk"];

pub fn run_csv(record: &RunRecord, timing: bool) -> String {
    let mut header = RUN_HEADER.to_vec();
    if timing {
        header.push("wall_ms");
    }
    let rows = record.points.iter().map(|p| {
        let mut r = vec![p.iteration.to_string(), p.samples.to_string(), f(p.risk)];
        if timing {
            r.push(f(p.wall_ms));
        }
        r
    });
    render_csv(&header, rows)
}

/// Per-schedule Z-process estimates and classification: (estimates CSV,
/// verdicts CSV, notes on schedules the grid can't classify).
pub fn divergence_tables(
    schedules: &[(String, ZProcessConfig)],
    ps: &[f64],
) -> Result<(String, String, Vec<String>)> {
    let mut estimates = String::from(CSV_HEADER);
    estimates.push('\n');
    let mut verdict_rows = Vec::new();
    let mut notes = Vec::new();
    for (id, base) in schedules {
        let mut results: Vec<ZResult> = Vec::new();
        for &p in ps {
            let cfg = ZProcessConfig { p, ..base.clone() };
            results.push(
                simulate_z(&cfg)
                    .map_err(|e| CliError::validation(format!("divergence.schedules.{id}"), e))?,
            );
        }
        let class = classify_stability(&results);
        let verdict = class.as_ref().ok().map(|c| c.verdict);
        for row in csv_rows(id, &results, verdict) {
            estimates.push_str(&row);
            estimates.push('\n');
        }
        match class {
            Ok(c) => verdict_rows.push(vec![
                id.clone(),
                c.verdict.as_str().into(),
                f(c.slope),
                c.censored.to_string(),
            ]),
            Err(e) => {
                notes.push(format!("{id}: not classified ({e})"));
                verdict_rows.push(vec![
                    id.clone(),
                    String::new(),
                    String::new(),
                    String::new(),
                ]);
            }
        }
    }
    let verdicts = render_csv(
        &["schedule_id", "verdict", "slope", "censored"],
        verdict_rows,
    );
    Ok((estimates, verdicts, notes))
}

/// Fitted curves keyed by tag, from a `loss_fit_csv` table.
pub fn read_fit_rows(path: &Path) -> Result<BTreeMap<String, CurveFit>> {
    let rows: Vec<FitRow> = read_rows(path)?;
    Ok(rows
        .into_iter()
        .map(|r| {
            (
                r.tag,
                CurveFit {
                    a: r.a,
                    b: r.b,
                    c: r.c,
                    e: r.e,
                    f: r.f,
                    r2: f64::NAN,
                },
            )
        })
        .collect())
}
