//! Small closed-form regressions: LR-curvature parabola and spectrum exponent.

use super::{invalid, FitError};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvatureFit {
    /// Loss at the fitted optimum.
    pub loss_min: f64,
    /// Optimal learning rate γ̄.
    pub lr_opt: f64,
    /// Coefficient of (ln γ − ln γ̄)².
    pub zeta: f64,
    /// The optimum lies at or beyond the edge of the sweep.
    pub at_boundary: bool,
}

/// Least-squares parabola `L = L* + ζ (ln γ − ln γ̄)²` through (lr, loss) points.
pub fn fit_lr_curvature(points: &[(f64, f64)]) -> Result<CurvatureFit, FitError> {
    let mut lrs: Vec<f64> = points.iter().map(|p| p.0).collect();
    lrs.sort_by(f64::total_cmp);
    lrs.dedup();
    if lrs.len() < 3 {
        return Err(invalid("points", "need at least 3 distinct learning rates"));
    }
    if points.iter().any(|p| !(p.0 > 0.0) || !p.1.is_finite()) {
        return Err(invalid(
            "points",
            "learning rates must be > 0 and losses finite",
        ));
    }
    let n = points.len();
    let a = DMatrix::from_fn(n, 3, |i, j| points[i].0.ln().powi(j as i32));
    let y = DVector::from_iterator(n, points.iter().map(|p| p.1));
    let coef = a
        .svd(true, true)
        .solve(&y, 1e-14)
        .map_err(|e| invalid("points", e.to_string()))?;
    let (c0, c1, c2) = (coef[0], coef[1], coef[2]);
    if !(c2 > 0.0) {
        return Err(FitError::NotConvex { curvature: c2 });
    }
    let x_opt = -c1 / (2.0 * c2);
    let lo = lrs[0].ln();
    let hi = lrs[lrs.len() - 1].ln();
    let best = points.iter().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap().0;
    Ok(CurvatureFit {
        loss_min: c0 - c1 * c1 / (4.0 * c2),
        lr_opt: x_opt.exp(),
        zeta: c2,
        at_boundary: x_opt <= lo || x_opt >= hi || best == lrs[0] || best == lrs[lrs.len() - 1],
    })
}

/// Expected loss increase for a relative LR error ε: ζ·ln(1+ε)².
pub fn loss_increase(zeta: f64, rel_error: f64) -> f64 {
    zeta * (1.0 + rel_error).ln().powi(2)
}

/// Fits λ_j ∝ j^(−2ρ) over 1-based indices `first..=last`; returns 2ρ.
pub fn fit_spectrum_exponent(
    eigenvalues: &[f64],
    first: usize,
    last: usize,
) -> Result<f64, FitError> {
    if first == 0 || last > eigenvalues.len() || last < first {
        return Err(invalid(
            "fit_range",
            format!("{first}..={last} outside 1..={}", eigenvalues.len()),
        ));
    }
    if last - first + 1 < 10 {
        return Err(invalid("fit_range", "need at least 10 eigenvalues"));
    }
    let range = &eigenvalues[first - 1..last];
    if let Some(bad) = range.iter().position(|v| !(*v > 0.0)) {
        return Err(invalid(
            "eigenvalues",
            format!("non-positive value at index {}", first + bad),
        ));
    }
    let xs: Vec<f64> = (first..=last).map(|j| (j as f64).ln()).collect();
    let ys: Vec<f64> = range.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Ok(-sxy / sxx)
}
