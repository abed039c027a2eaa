//! Saturated learning-rate law `γ*(P) = a·(b + P)^d` fitted by weighted
//! log-space MSE with Adagrad on (ln a, ln b, d).

use super::{invalid, FitError};
use crate::par::*;
use crate::rng::SeededRng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrPoint {
    /// Non-embedding parameters.
    pub p: f64,
    pub lr: f64,
    /// Rank weight, K − k + 1 for the k-th best rate.
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaturatedLrFit {
    pub a: f64,
    pub b: f64,
    pub d: f64,
    /// Weighted log-space MSE at the solution.
    pub loss: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl SaturatedLrFit {
    pub fn predict(&self, p: f64) -> f64 {
        self.a * (self.b + p).powf(self.d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LrFitOptions {
    pub max_steps: usize,
    pub learning_rate: f64,
    /// Stop when the loss moves less than this over `window` steps.
    pub tol: f64,
    pub window: usize,
}

impl Default for LrFitOptions {
    fn default() -> Self {
        Self {
            max_steps: 200_000,
            learning_rate: 0.01,
            tol: 1e-12,
            window: 1000,
        }
    }
}

/// Rank weights K, K−1, …, 1 for a best-first list of rates at one size.
pub fn rank_weights(k: usize) -> Vec<f64> {
    (0..k).map(|i| (k - i) as f64).collect()
}

struct Prepared {
    ln_p: Vec<f64>,
    p: Vec<f64>,
    ln_lr: Vec<f64>,
    w: Vec<f64>,
}

fn prepare(points: &[LrPoint]) -> Result<Prepared, FitError> {
    for pt in points {
        if !(pt.p > 0.0 && pt.lr > 0.0 && pt.weight >= 1.0) {
            return Err(invalid(
                "points",
                format!("need P > 0, lr > 0, weight >= 1: {pt:?}"),
            ));
        }
    }
    let mut sizes: Vec<f64> = points.iter().map(|p| p.p).collect();
    sizes.sort_by(f64::total_cmp);
    sizes.dedup();
    if sizes.len() < 3 {
        return Err(FitError::RankDeficient {
            needed: 3,
            got: sizes.len(),
        });
    }
    let total: f64 = points.iter().map(|p| p.weight * p.weight * p.p).sum();
    Ok(Prepared {
        ln_p: points.iter().map(|p| p.p.ln()).collect(),
        p: points.iter().map(|p| p.p).collect(),
        ln_lr: points.iter().map(|p| p.lr.ln()).collect(),
        w: points
            .iter()
            .map(|p| p.weight * p.weight * p.p / total)
            .collect(),
    })
}

impl Prepared {
    fn loss(&self, ln_a: f64, b: f64, d: f64) -> f64 {
        self.p
            .iter()
            .zip(&self.ln_lr)
            .zip(&self.w)
            .map(|((p, y), w)| {
                let r = y - ln_a - d * (b + p).ln();
                w * r * r
            })
            .sum()
    }

    /// Best (ln a, d) for a fixed b: weighted linear regression.
    fn profile(&self, b: f64) -> (f64, f64, f64) {
        let xs: Vec<f64> = self.p.iter().map(|p| (b + p).ln()).collect();
        let mx: f64 = xs.iter().zip(&self.w).map(|(x, w)| w * x).sum();
        let my: f64 = self.ln_lr.iter().zip(&self.w).map(|(y, w)| w * y).sum();
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for ((x, y), w) in xs.iter().zip(&self.ln_lr).zip(&self.w) {
            sxy += w * (x - mx) * (y - my);
            sxx += w * (x - mx) * (x - mx);
        }
        let d = sxy / sxx;
        let ln_a = my - d * mx;
        (ln_a, d, self.loss(ln_a, b, d))
    }

    /// Golden-section search of the profile loss over ln b.
    fn initial(&self) -> (f64, f64, f64) {
        let lo_p = self.ln_p.iter().cloned().fold(f64::INFINITY, f64::min);
        let (mut lo, mut hi) = (lo_p - 12.0, lo_p + 1.0);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        let f = |lb: f64| self.profile(lb.exp()).2;
        // Coarse scan first; the profile need not be unimodal.
        let grid: Vec<f64> = (0..=52).map(|i| lo + (hi - lo) * i as f64 / 52.0).collect();
        let best = grid
            .iter()
            .enumerate()
            .min_by(|a, b| f(*a.1).total_cmp(&f(*b.1)))
            .map(|(i, _)| i)
            .unwrap();
        lo = grid[best.saturating_sub(1)];
        hi = grid[(best + 1).min(52)];
        let (mut x1, mut x2) = (hi - g * (hi - lo), lo + g * (hi - lo));
        let (mut f1, mut f2) = (f(x1), f(x2));
        for _ in 0..100 {
            if f1 < f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - g * (hi - lo);
                f1 = f(x1);
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + g * (hi - lo);
                f2 = f(x2);
            }
        }
        let lb = 0.5 * (lo + hi);
        let (ln_a, d, _) = self.profile(lb.exp());
        (ln_a, lb, d)
    }
}

pub fn fit_saturated_lr(
    points: &[LrPoint],
    opts: &LrFitOptions,
) -> Result<SaturatedLrFit, FitError> {
    let data = prepare(points)?;
    let (mut ln_a, mut ln_b, mut d) = data.initial();
    let mut acc = [0.0f64; 3];
    let mut loss = data.loss(ln_a, ln_b.exp(), d);
    let mut checkpoint = loss;
    let mut iterations = 0;
    let mut converged = false;
    for k in 1..=opts.max_steps {
        let b = ln_b.exp();
        let mut g = [0.0f64; 3];
        for ((p, y), w) in data.p.iter().zip(&data.ln_lr).zip(&data.w) {
            let lp = (b + p).ln();
            let r = y - ln_a - d * lp;
            g[0] -= 2.0 * w * r;
            g[1] -= 2.0 * w * r * d * b / (b + p);
            g[2] -= 2.0 * w * r * lp;
        }
        let mut step = [0.0; 3];
        for i in 0..3 {
            acc[i] += g[i] * g[i];
            step[i] = opts.learning_rate * g[i] / (acc[i].sqrt() + 1e-12);
        }
        let trial = (ln_a - step[0], ln_b - step[1], d - step[2]);
        let trial_loss = data.loss(trial.0, trial.1.exp(), trial.2);
        // Keep the best point seen; Adagrad itself is not monotone.
        if trial_loss <= loss {
            (ln_a, ln_b, d) = trial;
            loss = trial_loss;
        } else {
            acc.iter_mut().for_each(|a| *a *= 4.0);
        }
        iterations = k;
        if k % opts.window == 0 {
            if (checkpoint - loss).abs() < opts.tol {
                converged = true;
                break;
            }
            checkpoint = loss;
        }
    }
    Ok(SaturatedLrFit {
        a: ln_a.exp(),
        b: ln_b.exp(),
        d,
        loss,
        iterations,
        converged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapBand {
    pub queries: Vec<f64>,
    /// Full-data prediction at each query.
    pub point: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// 95% percentile band of the exponent d.
    pub d_band: (f64, f64),
    pub replicates: usize,
    pub warnings: Vec<String>,
}

/// Linear-interpolated percentile of sorted data, q in [0, 1].
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.len() == 1 {
        return sorted[0];
    }
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 >= sorted.len() {
        sorted[sorted.len() - 1]
    } else {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    }
}

/// Size-level bootstrap: resample the model sizes with replacement, keep all
/// rates of each drawn size, refit, and report the 2.5/97.5 percentile band.
pub fn bootstrap_lr_fit(
    points: &[LrPoint],
    queries: &[f64],
    n_boot: usize,
    seed: u64,
    opts: &LrFitOptions,
) -> Result<BootstrapBand, FitError> {
    if n_boot == 0 {
        return Err(invalid("n_boot", "must be >= 1"));
    }
    let full = fit_saturated_lr(points, opts)?;
    let mut sizes: Vec<f64> = points.iter().map(|p| p.p).collect();
    sizes.sort_by(f64::total_cmp);
    sizes.dedup();
    let groups: Vec<Vec<LrPoint>> = sizes
        .iter()
        .map(|s| points.iter().copied().filter(|p| p.p == *s).collect())
        .collect();
    let m = groups.len();
    let outcomes: Vec<Result<(Vec<f64>, f64), String>> = (0..n_boot)
        .maybe_par()
        .map(|rep| {
            let mut rng = SeededRng::derive(seed, rep as u64);
            for _ in 0..10 {
                let draw: Vec<usize> = (0..m).map(|_| rng.below(m)).collect();
                let mut distinct = draw.clone();
                distinct.sort_unstable();
                distinct.dedup();
                if distinct.len() < 3 {
                    continue;
                }
                let sample: Vec<LrPoint> = draw
                    .iter()
                    .flat_map(|&i| groups[i].iter().copied())
                    .collect();
                return fit_saturated_lr(&sample, opts)
                    .map(|f| (queries.iter().map(|&q| f.predict(q)).collect(), f.d))
                    .map_err(|e| format!("replicate {rep}: {e}"));
            }
            Err(format!(
                "replicate {rep}: fewer than 3 distinct sizes after 10 draws, skipped"
            ))
        })
        .collect();
    let mut warnings = Vec::new();
    let mut preds = Vec::new();
    let mut ds = Vec::new();
    for o in outcomes {
        match o {
            Ok((p, d)) => {
                preds.push(p);
                ds.push(d);
            }
            Err(w) => warnings.push(w),
        }
    }
    if preds.is_empty() {
        return Err(invalid("n_boot", "every replicate was skipped"));
    }
    let mut lo = Vec::with_capacity(queries.len());
    let mut hi = Vec::with_capacity(queries.len());
    for qi in 0..queries.len() {
        let mut col: Vec<f64> = preds.iter().map(|p| p[qi]).collect();
        col.sort_by(f64::total_cmp);
        lo.push(percentile(&col, 0.025));
        hi.push(percentile(&col, 0.975));
    }
    ds.sort_by(f64::total_cmp);
    Ok(BootstrapBand {
        d_band: (percentile(&ds, 0.025), percentile(&ds, 0.975)),
        queries: queries.to_vec(),
        point: queries.iter().map(|&q| full.predict(q)).collect(),
        lo,
        hi,
        replicates: preds.len(),
        warnings,
    })
}
