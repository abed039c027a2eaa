//! Muon: SGD momentum orthogonalized by a quintic Newton–Schulz iteration.

use super::{adaptive, OptimizerConfig, OptimizerState, ParamBlock, StepCtx, StepError};
use nalgebra::DMatrix;

/// (a, b, c) of `X ← aX + (bXXᵀ + c(XXᵀ)²)X`.
pub const NS_COEFFS: (f64, f64, f64) = (3.4445, -4.7750, 2.0315);

/// Approximate `UVᵀ` of `m = UΣVᵀ`. Normalizes by `‖m‖_F + eps`, works on the
/// wide orientation and iterates `steps` times.
pub fn newton_schulz(m: &DMatrix<f64>, steps: usize, eps: f64) -> Result<DMatrix<f64>, StepError> {
    let norm = m.norm();
    if norm == 0.0 || !norm.is_finite() {
        return Err(StepError::Degenerate);
    }
    let tall = m.nrows() > m.ncols();
    let mut x = m / (norm + eps);
    if tall {
        x = x.transpose();
    }
    let (a, b, c) = NS_COEFFS;
    for _ in 0..steps {
        let xxt = &x * x.transpose();
        let poly = &xxt * b + &xxt * &xxt * c;
        x = &x * a + poly * &x;
    }
    Ok(if tall { x.transpose() } else { x })
}

/// The iteration restricted to one singular value: `s ← s(a + bs² + cs⁴)`.
pub fn newton_schulz_scalar(s0: f64, steps: usize) -> f64 {
    let (a, b, c) = NS_COEFFS;
    let mut s = s0;
    for _ in 0..steps {
        let s2 = s * s;
        s *= a + b * s2 + c * s2 * s2;
    }
    s
}

pub(super) fn step(
    cfg: &OptimizerConfig,
    ctx: &StepCtx,
    block: &mut ParamBlock,
    state: &mut OptimizerState,
    g: &[f64],
) {
    if !block.is_matrix {
        adaptive::adamw(cfg, ctx, block, state, g);
        return;
    }
    let mu = cfg.muon.momentum;
    for (m, gi) in state.m.iter_mut().zip(g) {
        *m = mu * *m + gi;
    }
    let mixed: Vec<f64> = if cfg.muon.nesterov {
        g.iter().zip(&state.m).map(|(gi, m)| gi + mu * m).collect()
    } else {
        state.m.clone()
    };
    let (rows, cols) = (block.rows, block.cols);
    let shrink = 1.0 - ctx.lr_mult * ctx.wd;
    let mat = DMatrix::from_row_slice(rows, cols, &mixed);
    match newton_schulz(&mat, cfg.muon.ns_steps, cfg.muon.ns_eps) {
        Ok(o) => {
            let scale = ctx.lr * cfg.muon.matched_rms * (rows.max(cols) as f64).sqrt();
            for r in 0..rows {
                for c in 0..cols {
                    let w = &mut block.values[r * cols + c];
                    *w = shrink * *w - scale * o[(r, c)];
                }
            }
        }
        // zero momentum: only the decay applies
        Err(_) => block.values.iter_mut().for_each(|w| *w *= shrink),
    }
}
