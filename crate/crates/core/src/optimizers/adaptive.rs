//! Adam-style rules: AdamW, ADana (and Log-NAdamW through its α rule),
//! Log-AdamW, AdEMAMix.

use super::{OptimizerConfig, OptimizerState, ParamBlock, StepCtx};

/// Advances the running product and returns `1 − Π β` (1 when correction is off).
fn correction(enabled: bool, prod: &mut f64, beta: f64) -> f64 {
    *prod *= beta;
    if enabled {
        1.0 - *prod
    } else {
        1.0
    }
}

pub(super) fn adamw(
    cfg: &OptimizerConfig,
    ctx: &StepCtx,
    block: &mut ParamBlock,
    state: &mut OptimizerState,
    g: &[f64],
) {
    let b1 = cfg.beta1.eval(ctx.t);
    let b2 = cfg.beta2.eval(ctx.t);
    let c1 = correction(cfg.bias_correction.first, &mut state.beta1_prod, b1);
    let c2 = correction(cfg.bias_correction.second, &mut state.beta2_prod, b2);
    let peak = ctx.lr_mult * peak_lr(cfg);
    for i in 0..g.len() {
        let m = b1 * state.m[i] + (1.0 - b1) * g[i];
        let s = b2 * state.s[i] + (1.0 - b2) * g[i] * g[i];
        state.m[i] = m;
        state.s[i] = s;
        let u = (m / c1) / ((s / c2).sqrt() + cfg.eps);
        let theta = block.values[i];
        block.values[i] = theta - peak * u - ctx.lr_mult * ctx.wd * theta;
    }
}

/// AdamW's peak rate, or the Muon fallback rate when that is set.
fn peak_lr(cfg: &OptimizerConfig) -> f64 {
    if cfg.algorithm == super::Algorithm::Muon {
        cfg.muon.fallback_peak_lr.unwrap_or(cfg.peak_lr)
    } else {
        cfg.peak_lr
    }
}

/// `u = (g + α(t)·m)/(√s + ε)`, with `g` replaced by the bias-corrected short
/// EMA when `beta3 > 0`.
pub(super) fn adana(
    cfg: &OptimizerConfig,
    ctx: &StepCtx,
    block: &mut ParamBlock,
    state: &mut OptimizerState,
    g: &[f64],
) {
    let b1 = cfg.beta1.eval(ctx.t);
    let b2 = cfg.beta2.eval(ctx.t);
    let alpha = cfg.alpha.eval(ctx.t);
    let c1 = correction(cfg.bias_correction.first, &mut state.beta1_prod, b1);
    let c2 = correction(cfg.bias_correction.second, &mut state.beta2_prod, b2);
    let b3 = cfg.beta3;
    let short = b3 > 0.0;
    let c3 = correction(short, &mut state.beta3_prod, b3);
    let peak = ctx.lr_mult * cfg.peak_lr;
    for i in 0..g.len() {
        let m = b1 * state.m[i] + (1.0 - b1) * g[i];
        let s = b2 * state.s[i] + (1.0 - b2) * g[i] * g[i];
        state.m[i] = m;
        state.s[i] = s;
        let fast = if short {
            let m3 = b3 * state.m3[i] + (1.0 - b3) * g[i];
            state.m3[i] = m3;
            m3 / c3
        } else {
            g[i]
        };
        let u = (fast + alpha * m / c1) / ((s / c2).sqrt() + cfg.eps);
        let theta = block.values[i];
        block.values[i] = theta - peak * u - ctx.lr_mult * ctx.wd * theta;
    }
}

/// Momentum-only numerator: `u = m/(√s + ε)`.
pub(super) fn log_adamw(
    cfg: &OptimizerConfig,
    ctx: &StepCtx,
    block: &mut ParamBlock,
    state: &mut OptimizerState,
    g: &[f64],
) {
    let b1 = cfg.beta1.eval(ctx.t);
    let b2 = cfg.beta2.eval(ctx.t);
    let c1 = correction(cfg.bias_correction.first, &mut state.beta1_prod, b1);
    let c2 = correction(cfg.bias_correction.second, &mut state.beta2_prod, b2);
    let peak = ctx.lr_mult * cfg.peak_lr;
    for i in 0..g.len() {
        let m = b1 * state.m[i] + (1.0 - b1) * g[i];
        let s = b2 * state.s[i] + (1.0 - b2) * g[i] * g[i];
        state.m[i] = m;
        state.s[i] = s;
        let u = (m / c1) / ((s / c2).sqrt() + cfg.eps);
        let theta = block.values[i];
        block.values[i] = theta - peak * u - ctx.lr_mult * ctx.wd * theta;
    }
}

/// Short EMA and second moment bias-corrected, long EMA left raw.
pub(super) fn ademamix(
    cfg: &OptimizerConfig,
    ctx: &StepCtx,
    block: &mut ParamBlock,
    state: &mut OptimizerState,
    g: &[f64],
) {
    let b1 = cfg.beta1.eval(ctx.t);
    let b2 = cfg.beta2.eval(ctx.t);
    let b3 = cfg.beta3;
    let alpha = cfg.alpha.eval(ctx.t);
    state.beta1_prod *= b1;
    let c2 = correction(true, &mut state.beta2_prod, b2);
    let c3 = correction(true, &mut state.beta3_prod, b3);
    let peak = ctx.lr_mult * cfg.peak_lr;
    for i in 0..g.len() {
        let m3 = b3 * state.m3[i] + (1.0 - b3) * g[i];
        let m1 = b1 * state.m[i] + (1.0 - b1) * g[i];
        let s = b2 * state.s[i] + (1.0 - b2) * g[i] * g[i];
        state.m3[i] = m3;
        state.m[i] = m1;
        state.s[i] = s;
        let u = (m3 / c3 + alpha * m1) / ((s / c2).sqrt() + cfg.eps);
        let theta = block.values[i];
        block.values[i] = theta - peak * u - ctx.lr_mult * ctx.wd * theta;
    }
}
