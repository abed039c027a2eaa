//! Sparse-gradient Z-process.
//!
//! A scalar gradient `g_t = X_t B_t` with `B_t ~ Bernoulli(p)` drives the
//! moments `m`, `v` of an Adam-like rule. Between consecutive nonzero
//! gradients the normalized momentum `Y_t = m_t / (√v_t + ε)` is summed into
//! `Z_ℓ`, the total displacement produced by the ℓ-th nonzero gradient.

use crate::par::*;
use crate::rng::SeededRng;
use crate::schedules::{ScheduleError, ScheduleSpec};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// |Z| values above this are recorded as this value and flagged censored.
pub const CENSOR_AT: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DivergenceError {
    #[error("{field}: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("stability condition violated: beta1^2 = {b1sq} >= beta2 = {beta2}")]
    StabilityViolated { b1sq: f64, beta2: f64 },
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MagnitudeLaw {
    /// |X| ≡ 1.
    #[default]
    Unit,
    StandardNormal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZProcessConfig {
    pub beta1: ScheduleSpec,
    pub beta2: ScheduleSpec,
    pub p: f64,
    pub eps: f64,
    /// Number of windows ℓ = 1..=ell_max.
    pub ell_max: usize,
    pub trials: usize,
    pub magnitude: MagnitudeLaw,
    /// Common factor on every X.
    pub scale: f64,
    pub seed: u64,
}

impl Default for ZProcessConfig {
    fn default() -> Self {
        Self {
            beta1: ScheduleSpec::log_beta(8.0),
            beta2: ScheduleSpec::log_beta(8.0),
            p: 0.1,
            eps: 1e-8,
            ell_max: 3,
            trials: 1000,
            magnitude: MagnitudeLaw::Unit,
            scale: 1.0,
            seed: 0,
        }
    }
}

impl ZProcessConfig {
    pub fn validate(&self) -> Result<(), DivergenceError> {
        let bad = |field, reason: &str| {
            Err(DivergenceError::Invalid {
                field,
                reason: reason.to_string(),
            })
        };
        if !(self.p > 0.0 && self.p <= 1.0) {
            return bad("p", "must lie in (0, 1]");
        }
        if self.trials == 0 {
            return bad("trials", "must be >= 1");
        }
        if self.ell_max == 0 {
            return bad("ell_max", "must be >= 1");
        }
        if !(self.eps > 0.0) {
            return bad("eps", "must be > 0");
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return bad("scale", "must be > 0");
        }
        self.beta1.validate_beta()?;
        self.beta2.validate_beta()?;
        Ok(())
    }
}

/// Per-window statistics across trials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZEstimate {
    pub ell: usize,
    pub mean_abs: f64,
    pub stderr: f64,
    pub max_abs: f64,
    pub censored_frac: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZResult {
    pub p: f64,
    pub trials: usize,
    pub windows: Vec<ZEstimate>,
    /// Mean number of steps between consecutive nonzero gradients.
    pub mean_gap: f64,
    pub gap_stderr: f64,
}

impl ZResult {
    /// sup over ℓ of E|Z_ℓ|.
    pub fn sup_mean(&self) -> f64 {
        self.windows.iter().map(|w| w.mean_abs).fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.windows.iter().map(|w| w.max_abs).fold(0.0, f64::max)
    }

    pub fn censored(&self) -> bool {
        self.windows.iter().any(|w| w.censored_frac > 0.0)
    }
}

struct Trial {
    z: Vec<f64>,
    censored: Vec<bool>,
    gaps: Vec<f64>,
}

/// Steps until the next nonzero gradient, ≥ 1.
fn geometric_gap(rng: &mut SeededRng, p: f64) -> u64 {
    if p >= 1.0 {
        return 1;
    }
    // Inversion: P(G > k) = (1 − p)^k.
    let u = 1.0 - rng.uniform();
    (u.ln() / (-p).ln_1p()).floor() as u64 + 1
}

fn one_trial(cfg: &ZProcessConfig, index: usize) -> Trial {
    let mut rng = SeededRng::derive(cfg.seed, index as u64);
    let windows = cfg.ell_max;
    let mut z = vec![0.0; windows];
    let mut censored = vec![false; windows];
    let mut gaps = Vec::with_capacity(windows);
    let (mut m, mut v) = (0.0f64, 0.0f64);
    // Before the first arrival m = v = 0, so Y = 0 and those steps are skipped.
    let mut t = geometric_gap(&mut rng, cfg.p) - 1;
    let mut next_hit = t;
    let mut ell = 0usize;
    loop {
        let b1 = cfg.beta1.eval(t as f64);
        let b2 = cfg.beta2.eval(t as f64);
        let g = if t == next_hit {
            ell += 1;
            if ell > windows {
                break;
            }
            let gap = geometric_gap(&mut rng, cfg.p);
            gaps.push(gap as f64);
            next_hit = t + gap;
            let x = match cfg.magnitude {
                MagnitudeLaw::Unit => 1.0,
                MagnitudeLaw::StandardNormal => rng.normal(),
            };
            cfg.scale * x
        } else {
            0.0
        };
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        let y = m / (v.sqrt() + cfg.eps);
        let k = ell - 1;
        if !censored[k] {
            z[k] += y;
            if !z[k].is_finite() || z[k].abs() > CENSOR_AT {
                z[k] = CENSOR_AT;
                censored[k] = true;
            }
        }
        t += 1;
        if censored[k] && t < next_hit {
            // The rest of this window cannot change the recorded value.
            let skip_to = next_hit;
            // Advance the moments through the zero-gradient stretch.
            while t < skip_to {
                let b1 = cfg.beta1.eval(t as f64);
                let b2 = cfg.beta2.eval(t as f64);
                m *= b1;
                v *= b2;
                t += 1;
            }
        }
    }
    Trial { z, censored, gaps }
}

/// Runs every trial (in parallel) and reduces them in trial order, so the
/// result does not depend on the worker count.
pub fn simulate_z(cfg: &ZProcessConfig) -> Result<ZResult, DivergenceError> {
    cfg.validate()?;
    let trials: Vec<Trial> = (0..cfg.trials)
        .maybe_par()
        .map(|i| one_trial(cfg, i))
        .collect();
    let n = cfg.trials as f64;
    let windows = (0..cfg.ell_max)
        .map(|k| {
            let (mut sum, mut sq, mut max, mut cens) = (0.0, 0.0, 0.0f64, 0usize);
            for tr in &trials {
                let a = tr.z[k].abs();
                sum += a;
                sq += a * a;
                max = max.max(a);
                cens += tr.censored[k] as usize;
            }
            let mean = sum / n;
            let var = if cfg.trials > 1 {
                ((sq - n * mean * mean) / (n - 1.0)).max(0.0)
            } else {
                0.0
            };
            ZEstimate {
                ell: k + 1,
                mean_abs: mean,
                stderr: (var / n).sqrt(),
                max_abs: max,
                censored_frac: cens as f64 / n,
            }
        })
        .collect();
    let gaps: Vec<f64> = trials.iter().flat_map(|t| t.gaps.iter().copied()).collect();
    let gn = gaps.len() as f64;
    let gmean = gaps.iter().sum::<f64>() / gn;
    let gvar = gaps.iter().map(|g| (g - gmean).powi(2)).sum::<f64>() / (gn - 1.0).max(1.0);
    Ok(ZResult {
        p: cfg.p,
        trials: cfg.trials,
        windows,
        mean_gap: gmean,
        gap_stderr: (gvar / gn).sqrt(),
    })
}

/// Uniform bound on E|Z_ℓ| for constant (β₁, β₂) with β₁² < β₂:
/// `(1 − β₁) / (√(1 − β₂) (1 − β₁/√β₂)²)`.
pub fn bound_constant_beta(beta1: f64, beta2: f64) -> Result<f64, DivergenceError> {
    if !(0.0..1.0).contains(&beta1) {
        return Err(DivergenceError::Invalid {
            field: "beta1",
            reason: format!("{beta1} not in [0, 1)"),
        });
    }
    if !(beta2 > 0.0 && beta2 < 1.0) {
        return Err(DivergenceError::Invalid {
            field: "beta2",
            reason: format!("{beta2} not in (0, 1)"),
        });
    }
    if beta1 * beta1 >= beta2 {
        return Err(DivergenceError::StabilityViolated {
            b1sq: beta1 * beta1,
            beta2,
        });
    }
    let damp = 1.0 - beta1 / beta2.sqrt();
    Ok((1.0 - beta1) / ((1.0 - beta2).sqrt() * damp * damp))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Bounded,
    SqrtP,
    Divergent,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Bounded => "BOUNDED",
            Verdict::SqrtP => "SQRT_P",
            Verdict::Divergent => "DIVERGENT",
        }
    }
}

/// Slope bands for [`classify_stability`].
pub const BOUNDED_BELOW: f64 = 0.15;
pub const SQRT_P_BAND: (f64, f64) = (0.35, 0.65);
pub const MIN_TRIALS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub verdict: Verdict,
    /// Least-squares slope of log sup_ℓ E|Z_ℓ| against log(1/p).
    pub slope: f64,
    pub censored: bool,
}

/// Classifies growth of sup_ℓ E|Z_ℓ| as p → 0. Any censored estimate makes
/// the slope a lower bound and the verdict DIVERGENT.
pub fn classify_stability(results: &[ZResult]) -> Result<Classification, DivergenceError> {
    let mut ps: Vec<f64> = results.iter().map(|r| r.p).collect();
    ps.sort_by(f64::total_cmp);
    ps.dedup();
    if ps.len() < 3 {
        return Err(DivergenceError::Invalid {
            field: "p",
            reason: format!("need at least 3 distinct p values, got {}", ps.len()),
        });
    }
    if ps[ps.len() - 1] / ps[0] < 99.9 {
        return Err(DivergenceError::Invalid {
            field: "p",
            reason: "grid must span at least two decades".into(),
        });
    }
    if let Some(r) = results.iter().find(|r| r.trials < MIN_TRIALS) {
        return Err(DivergenceError::Invalid {
            field: "trials",
            reason: format!("{} trials at p = {}, need >= {MIN_TRIALS}", r.trials, r.p),
        });
    }
    let xs: Vec<f64> = results.iter().map(|r| (1.0 / r.p).ln()).collect();
    let ys: Vec<f64> = results
        .iter()
        .map(|r| r.sup_mean().max(f64::MIN_POSITIVE).ln())
        .collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let censored = results.iter().any(ZResult::censored);
    let verdict = if censored {
        Verdict::Divergent
    } else if slope < BOUNDED_BELOW {
        Verdict::Bounded
    } else if (SQRT_P_BAND.0..=SQRT_P_BAND.1).contains(&slope) {
        Verdict::SqrtP
    } else {
        Verdict::Divergent
    };
    Ok(Classification {
        verdict,
        slope,
        censored,
    })
}

pub const CSV_HEADER: &str = "schedule_id,p,ell,mean_absZ,stderr,censored_frac,verdict";

/// One CSV row per (p, ℓ).
pub fn csv_rows(schedule_id: &str, results: &[ZResult], verdict: Option<Verdict>) -> Vec<String> {
    let v = verdict.map_or("", Verdict::as_str);
    results
        .iter()
        .flat_map(|r| {
            r.windows.iter().map(move |w| {
                format!(
                    "{schedule_id},{},{},{},{},{},{v}",
                    r.p, w.ell, w.mean_abs, w.stderr, w.censored_frac
                )
            })
        })
        .collect()
}
