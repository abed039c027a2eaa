//! Three ways of writing Nesterov's method with μ_t = t/(t+3).
//!
//! - two-sequence: `θ_{t+1} = y_t − γ∇L(y_t)`, `y_{t+1} = θ_{t+1} + μ_t(θ_{t+1} − θ_t)`;
//!   the block holds θ, the state holds y.
//! - extra-gradient: `m_{t+1} = μ_{t−1}m_t + g`, `Φ_{t+1} = Φ_t − γ(g + μ_t m_{t+1})`.
//! - EMA: `p_{t+1} = μ_{t−1}p_t + (1−μ_{t−1})g`, `Φ_{t+1} = Φ_t − γ(g + μ_t/(1−μ_{t−1}) p_{t+1})`.
//!
//! The first two are the same sequence under `y_t = Φ_t`,
//! `θ_t = Φ_t + μ_{t−1}γ m_t`. The EMA form only matches asymptotically.
//! μ at negative times is taken as 0.

use super::{OptimizerConfig, OptimizerState, ParamBlock, StepCtx};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NesterovFormulation {
    TwoSequence,
    ExtraGradient,
    Ema,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MuRule {
    /// μ_t = t/(t+3).
    ThreeOverT,
    /// μ_t = 1 − 2/(t+1), clamped at 0.
    TwoOverT,
}

/// μ_t, with μ_t = 0 for t < 0.
pub fn nesterov_mu(rule: MuRule, t: f64) -> f64 {
    if t < 0.0 {
        return 0.0;
    }
    match rule {
        MuRule::ThreeOverT => t / (t + 3.0),
        MuRule::TwoOverT => (1.0 - 2.0 / (t + 1.0)).max(0.0),
    }
}

pub(super) fn step(
    cfg: &OptimizerConfig,
    ctx: &StepCtx,
    block: &mut ParamBlock,
    state: &mut OptimizerState,
    g: &[f64],
) {
    let rule = cfg.nesterov.mu;
    let mu = nesterov_mu(rule, ctx.t);
    let mu_prev = nesterov_mu(rule, ctx.t - 1.0);
    let decay = ctx.lr_mult * ctx.wd;
    match cfg.nesterov.formulation {
        NesterovFormulation::TwoSequence => {
            for i in 0..g.len() {
                let old = block.values[i];
                let y = state.y[i];
                let new = y - ctx.lr * g[i] - decay * y;
                block.values[i] = new;
                state.y[i] = new + mu * (new - old);
            }
        }
        NesterovFormulation::ExtraGradient => {
            for i in 0..g.len() {
                let m = mu_prev * state.m[i] + g[i];
                state.m[i] = m;
                let phi = block.values[i];
                block.values[i] = phi - ctx.lr * (g[i] + mu * m) - decay * phi;
            }
        }
        NesterovFormulation::Ema => {
            let k = mu / (1.0 - mu_prev);
            for i in 0..g.len() {
                let p = mu_prev * state.m[i] + (1.0 - mu_prev) * g[i];
                state.m[i] = p;
                let phi = block.values[i];
                block.values[i] = phi - ctx.lr * (g[i] + k * p) - decay * phi;
            }
        }
    }
}
