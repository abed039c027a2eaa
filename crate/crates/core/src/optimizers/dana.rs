//! Non-adaptive Dana/SGD and the hardened adaptive variants (Dana-Star,
//! Dana-MK4, Dana-Star-MK4).

use super::{sign, OptimizerConfig, OptimizerState, ParamBlock, StepCtx};

pub(super) fn sgd(ctx: &StepCtx, block: &mut ParamBlock, g: &[f64]) {
    for (theta, gi) in block.values.iter_mut().zip(g) {
        *theta -= ctx.lr * gi + ctx.lr_mult * ctx.wd * *theta;
    }
}

/// `θ ← θ − γ(g + α(t)·m)`; stochastic Nesterov is the α = (δ+t)/δ case.
pub(super) fn dana(
    cfg: &OptimizerConfig,
    ctx: &StepCtx,
    block: &mut ParamBlock,
    state: &mut OptimizerState,
    g: &[f64],
) {
    let b1 = cfg.beta1.eval(ctx.t);
    let alpha = cfg.alpha.eval(ctx.t);
    for i in 0..g.len() {
        let m = b1 * state.m[i] + (1.0 - b1) * g[i];
        state.m[i] = m;
        let theta = block.values[i];
        block.values[i] = theta - ctx.lr * (g[i] + alpha * m) - ctx.lr_mult * ctx.wd * theta;
    }
}

/// τ estimator shared by the Star variants. Returns (t_eff, τ̃).
#[inline]
fn tau_update(tau: &mut f64, g: f64, s: f64, t: f64, delta: f64, eps: f64) -> (f64, f64) {
    let upd = g.abs() / (g.abs() + s.sqrt() + eps);
    let w = delta / (t + delta);
    *tau = (1.0 - w) * *tau + w * upd;
    let t_eff = (t * *tau).max(1.0);
    let clip = tau.min(0.5);
    let tilde = (clip / (1.0 - clip)).max(1.0 / (1.0 + t));
    (t_eff, tilde)
}

/// α is evaluated at t_eff; both numerators scale by √τ̃.
pub(super) fn dana_star(
    cfg: &OptimizerConfig,
    ctx: &StepCtx,
    block: &mut ParamBlock,
    state: &mut OptimizerState,
    g: &[f64],
) {
    let b1 = cfg.beta1.eval(ctx.t);
    let b2 = cfg.beta2.eval(ctx.t);
    let peak = ctx.lr_mult * cfg.peak_lr;
    for i in 0..g.len() {
        let m = b1 * state.m[i] + (1.0 - b1) * g[i];
        let s = b2 * state.s[i] + (1.0 - b2) * g[i] * g[i];
        state.m[i] = m;
        state.s[i] = s;
        let (t_eff, tilde) = tau_update(&mut state.tau[i], g[i], s, ctx.t, cfg.delta, cfg.eps);
        let alpha = cfg.alpha.eval(t_eff);
        let u = tilde.sqrt() * (g[i] + alpha * m) / (s.sqrt() + cfg.eps);
        let theta = block.values[i];
        block.values[i] = theta - peak * u - ctx.lr_mult * ctx.wd * theta;
    }
}

/// Damping factor of the MK4 variants: α̃·x^(1−κ).
fn mk4_power(cfg: &OptimizerConfig, x: f64) -> f64 {
    let kappa = cfg.kappa().expect("validated config");
    let scale = match cfg.alpha {
        crate::schedules::ScheduleSpec::DampingDecaying { alpha_tilde, .. }
        | crate::schedules::ScheduleSpec::DampingConstant { alpha_tilde, .. } => alpha_tilde,
        _ => 1.0,
    };
    scale * x.powf(1.0 - kappa)
}

pub(super) fn dana_mk4(
    cfg: &OptimizerConfig,
    ctx: &StepCtx,
    block: &mut ParamBlock,
    state: &mut OptimizerState,
    g: &[f64],
) {
    let b1 = cfg.beta1.eval(ctx.t);
    let b2 = cfg.beta2.eval(ctx.t);
    let damp = mk4_power(cfg, ctx.t);
    let peak = ctx.lr_mult * cfg.peak_lr;
    for i in 0..g.len() {
        let m = b1 * state.m[i] + (1.0 - b1) * g[i];
        let s = b2 * state.s[i] + (1.0 - b2) * g[i] * g[i];
        state.m[i] = m;
        state.s[i] = s;
        let norm = 1.0 / (s.sqrt() + cfg.eps);
        let mfac = m.abs() * norm;
        let alpha_fac = (damp * mfac).min(cfg.clipsnr);
        let u = g[i] * norm + sign(m) * (alpha_fac + m.abs() * norm);
        let theta = block.values[i];
        block.values[i] = theta - peak * u - ctx.lr_mult * ctx.wd * theta;
    }
}

pub(super) fn dana_star_mk4(
    cfg: &OptimizerConfig,
    ctx: &StepCtx,
    block: &mut ParamBlock,
    state: &mut OptimizerState,
    g: &[f64],
) {
    let b1 = cfg.beta1.eval(ctx.t);
    let b2 = cfg.beta2.eval(ctx.t);
    let peak = ctx.lr_mult * cfg.peak_lr;
    for i in 0..g.len() {
        let m = b1 * state.m[i] + (1.0 - b1) * g[i];
        let s = b2 * state.s[i] + (1.0 - b2) * g[i] * g[i];
        state.m[i] = m;
        state.s[i] = s;
        let (t_eff, tilde) = tau_update(&mut state.tau[i], g[i], s, ctx.t, cfg.delta, cfg.eps);
        let norm = tilde.sqrt() / (s.sqrt() + cfg.eps);
        let mfac = m.abs() * norm / tilde;
        let alpha_fac = (mk4_power(cfg, t_eff) * mfac).min(cfg.clipsnr);
        let u = g[i] * norm + sign(m) * (tilde * alpha_fac + m.abs() * norm);
        let theta = block.values[i];
        block.values[i] = theta - peak * u - ctx.lr_mult * ctx.wd * theta;
    }
}
