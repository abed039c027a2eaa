//! Compute multiplier of a target curve against a baseline, by inverting the
//! baseline's piecewise-affine loss-vs-compute curve.

use super::{invalid, FitError};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Interpolation {
    /// Affine in (log C, L).
    #[default]
    LogCompute,
    /// Affine in (C, L).
    LinearCompute,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultiplierPoint {
    /// Target compute C^B.
    pub compute: f64,
    pub loss: f64,
    /// Baseline compute C^A needed to reach `loss`.
    pub baseline_compute: f64,
    pub multiplier: f64,
    pub efficiency: f64,
}

/// Points are (compute, loss) pairs.
pub fn compute_multiplier(
    baseline: &[(f64, f64)],
    target: &[(f64, f64)],
    interp: Interpolation,
) -> Result<Vec<MultiplierPoint>, FitError> {
    if baseline.len() < 2 {
        return Err(invalid("baseline", "need at least 2 points"));
    }
    if baseline
        .iter()
        .chain(target)
        .any(|&(c, l)| !(c > 0.0) || !l.is_finite())
    {
        return Err(invalid("points", "compute must be > 0 and loss finite"));
    }
    let mut base = baseline.to_vec();
    base.sort_by(|a, b| a.0.total_cmp(&b.0));
    let offending: Vec<(f64, f64)> = base
        .windows(2)
        .filter(|w| w[1].1 >= w[0].1)
        .flat_map(|w| [w[0], w[1]])
        .collect();
    if !offending.is_empty() {
        return Err(FitError::AmbiguousInversion { points: offending });
    }
    let x = |c: f64| match interp {
        Interpolation::LogCompute => c.log10(),
        Interpolation::LinearCompute => c,
    };
    let unx = |v: f64| match interp {
        Interpolation::LogCompute => 10f64.powf(v),
        Interpolation::LinearCompute => v,
    };
    let n = base.len();
    target
        .iter()
        .map(|&(cb, loss)| {
            let ca = if let Some(&(c, _)) = base.iter().find(|p| p.1 == loss) {
                c
            } else {
                // Segment whose loss range holds `loss`, else the nearest edge segment.
                let k = if loss > base[0].1 {
                    0
                } else if loss < base[n - 1].1 {
                    n - 2
                } else {
                    (0..n - 1).find(|&k| base[k + 1].1 <= loss).unwrap()
                };
                let (c0, l0) = base[k];
                let (c1, l1) = base[k + 1];
                let v = x(c0) + (loss - l0) / (l1 - l0) * (x(c1) - x(c0));
                unx(v)
            };
            if !(ca > 0.0) {
                return Err(invalid(
                    "target",
                    format!("loss {loss} extrapolates to non-positive baseline compute"),
                ));
            }
            let multiplier = ca / cb;
            Ok(MultiplierPoint {
                compute: cb,
                loss,
                baseline_compute: ca,
                multiplier,
                efficiency: multiplier - 1.0,
            })
        })
        .collect()
}
