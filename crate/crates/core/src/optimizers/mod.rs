//! Per-block update rules.
//!
//! Every algorithm is driven through [`step`], which reads the iteration
//! counter from the state, applies one update in place and increments the
//! counter. Learning rate, weight decay and the β/α rules all come from
//! [`ScheduleSpec`]s held in the [`OptimizerConfig`].
//!
//! Weight decay is independent of the peak rate everywhere:
//! `θ ← θ − γ(t)(γ*·u + λ(t)·θ)` where `u` is the algorithm's direction.

mod adaptive;
mod dana;
mod muon;
mod nesterov;

pub use muon::{newton_schulz, newton_schulz_scalar, NS_COEFFS};
pub use nesterov::{nesterov_mu, MuRule, NesterovFormulation};

use crate::schedules::{ScheduleError, ScheduleSpec};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Sgd,
    #[serde(rename = "adamw")]
    AdamW,
    #[serde(rename = "adana")]
    ADana,
    #[serde(rename = "log-adamw")]
    LogAdamW,
    #[serde(rename = "log-nadamw")]
    LogNAdamW,
    #[serde(rename = "ademamix")]
    AdEMAMix,
    Dana,
    StochasticNesterov,
    Nesterov,
    DanaStar,
    DanaMk4,
    DanaStarMk4,
    Muon,
}

impl Algorithm {
    pub const ALL: [Algorithm; 13] = [
        Algorithm::Sgd,
        Algorithm::AdamW,
        Algorithm::ADana,
        Algorithm::LogAdamW,
        Algorithm::LogNAdamW,
        Algorithm::AdEMAMix,
        Algorithm::Dana,
        Algorithm::StochasticNesterov,
        Algorithm::Nesterov,
        Algorithm::DanaStar,
        Algorithm::DanaMk4,
        Algorithm::DanaStarMk4,
        Algorithm::Muon,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Sgd => "sgd",
            Algorithm::AdamW => "adamw",
            Algorithm::ADana => "adana",
            Algorithm::LogAdamW => "log-adamw",
            Algorithm::LogNAdamW => "log-nadamw",
            Algorithm::AdEMAMix => "ademamix",
            Algorithm::Dana => "dana",
            Algorithm::StochasticNesterov => "stochastic-nesterov",
            Algorithm::Nesterov => "nesterov",
            Algorithm::DanaStar => "dana-star",
            Algorithm::DanaMk4 => "dana-mk4",
            Algorithm::DanaStarMk4 => "dana-star-mk4",
            Algorithm::Muon => "muon",
        }
    }

    fn uses_second_moment(self) -> bool {
        !matches!(
            self,
            Algorithm::Sgd | Algorithm::Dana | Algorithm::StochasticNesterov | Algorithm::Nesterov
        )
    }

    fn uses_tau(self) -> bool {
        matches!(self, Algorithm::DanaStar | Algorithm::DanaStarMk4)
    }
}

/// Which moment buffers get divided by `1 − Π β`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BiasCorrection {
    pub first: bool,
    pub second: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MuonConfig {
    pub ns_steps: usize,
    pub matched_rms: f64,
    pub momentum: f64,
    pub nesterov: bool,
    /// Frobenius normalization guard.
    pub ns_eps: f64,
    /// Peak rate for the AdamW fallback on non-matrix blocks; `None` reuses γ*.
    pub fallback_peak_lr: Option<f64>,
}

impl Default for MuonConfig {
    fn default() -> Self {
        Self {
            ns_steps: 5,
            matched_rms: 0.2,
            momentum: 0.95,
            nesterov: true,
            ns_eps: 1e-7,
            fallback_peak_lr: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NesterovConfig {
    pub formulation: NesterovFormulation,
    pub mu: MuRule,
}

impl Default for NesterovConfig {
    fn default() -> Self {
        Self {
            formulation: NesterovFormulation::TwoSequence,
            mu: MuRule::ThreeOverT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub algorithm: Algorithm,
    /// γ*.
    pub peak_lr: f64,
    /// γ(t), a multiplier of γ*.
    pub lr: ScheduleSpec,
    pub beta1: ScheduleSpec,
    pub beta2: ScheduleSpec,
    pub weight_decay: ScheduleSpec,
    pub alpha: ScheduleSpec,
    /// Short EMA. AdEMAMix always uses it; ADana uses it when > 0.
    pub beta3: f64,
    /// Offset of the τ estimator's log-time weights (Dana-Star family).
    pub delta: f64,
    pub eps: f64,
    pub clipsnr: f64,
    /// Global-norm gradient clip; off when `None`.
    pub grad_clip: Option<f64>,
    pub bias_correction: BiasCorrection,
    pub muon: MuonConfig,
    pub nesterov: NesterovConfig,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::ADana,
            peak_lr: 1e-3,
            lr: ScheduleSpec::constant(1.0),
            beta1: ScheduleSpec::log_beta(8.0),
            beta2: ScheduleSpec::log_beta(8.0),
            weight_decay: ScheduleSpec::constant(0.0),
            alpha: ScheduleSpec::DampingDecaying {
                alpha_tilde: 1.0,
                kappa: 0.85,
            },
            beta3: 0.0,
            delta: 8.0,
            eps: 1e-8,
            clipsnr: 2.0,
            grad_clip: None,
            bias_correction: BiasCorrection::default(),
            muon: MuonConfig::default(),
            nesterov: NesterovConfig::default(),
        }
    }
}

/// Validation failure with a dotted path to the offending field.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{path}: {reason}")]
pub struct ConfigError {
    pub path: String,
    pub reason: String,
}

impl ConfigError {
    fn new(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            reason: reason.into(),
        }
    }

    fn from_schedule(slot: &str, err: ScheduleError) -> Self {
        match err {
            ScheduleError::Invalid { field, reason } => {
                Self::new(format!("{slot}.{field}"), reason)
            }
            other => Self::new(slot, other.to_string()),
        }
    }

    /// Prefix the path, e.g. `alpha.kappa` → `optimizer.alpha.kappa`.
    pub fn within(mut self, parent: &str) -> Self {
        self.path = format!("{parent}.{}", self.path);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StepError {
    #[error("gradient has {got} entries, parameters have {expected}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("non-finite gradient entry {value} at index {index}")]
    NonFiniteGradient { index: usize, value: f64 },
    #[error("cannot orthogonalize an all-zero matrix")]
    Degenerate,
}

impl OptimizerConfig {
    /// Defaults for `algorithm` over a horizon of `horizon` steps: δ = 8,
    /// κ = 0.85, ω = 4 with Ω = 10 where the algorithm decays weight decay,
    /// clipsnr = 2.
    pub fn preset(algorithm: Algorithm, peak_lr: f64, horizon: f64) -> Self {
        let decaying_wd = ScheduleSpec::DecayingWd {
            omega: 4.0,
            horizon,
            divisor: 10.0,
        };
        let base = Self {
            algorithm,
            peak_lr,
            ..Self::default()
        };
        match algorithm {
            Algorithm::Sgd => Self {
                beta1: ScheduleSpec::constant(0.0),
                beta2: ScheduleSpec::constant(0.0),
                alpha: ScheduleSpec::constant(0.0),
                ..base
            },
            Algorithm::AdamW | Algorithm::Muon => Self {
                beta1: ScheduleSpec::constant(0.9),
                beta2: ScheduleSpec::constant(0.999),
                alpha: ScheduleSpec::constant(0.0),
                weight_decay: ScheduleSpec::constant(0.0),
                ..base
            },
            Algorithm::LogAdamW => Self {
                alpha: ScheduleSpec::constant(0.0),
                weight_decay: decaying_wd,
                ..base
            },
            Algorithm::LogNAdamW => Self {
                alpha: ScheduleSpec::Undamped { delta: 8.0 },
                weight_decay: decaying_wd,
                ..base
            },
            Algorithm::StochasticNesterov => Self {
                beta2: ScheduleSpec::constant(0.0),
                alpha: ScheduleSpec::Undamped { delta: 8.0 },
                ..base
            },
            Algorithm::Dana | Algorithm::Nesterov => Self {
                beta2: ScheduleSpec::constant(0.0),
                ..base
            },
            Algorithm::AdEMAMix => Self {
                beta1: ScheduleSpec::AdemamixBeta1Warmup {
                    beta1: 1.0 - 8.0 / horizon,
                    beta3: 0.9,
                    horizon,
                },
                beta2: ScheduleSpec::constant(0.999),
                alpha: ScheduleSpec::AdemamixAlphaWarmup {
                    alpha: horizon.powf(1.0 - 0.85),
                    horizon,
                },
                beta3: 0.9,
                weight_decay: decaying_wd,
                ..base
            },
            Algorithm::ADana
            | Algorithm::DanaStar
            | Algorithm::DanaMk4
            | Algorithm::DanaStarMk4 => Self {
                weight_decay: decaying_wd,
                ..base
            },
        }
    }

    /// κ of a `damping-decaying` α rule; the MK4 variants read κ from there.
    pub fn kappa(&self) -> Option<f64> {
        match self.alpha {
            ScheduleSpec::DampingDecaying { kappa, .. } => Some(kappa),
            ScheduleSpec::DampingConstant { kappa, .. } => Some(kappa),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.peak_lr > 0.0 && self.peak_lr.is_finite()) {
            return Err(ConfigError::new(
                "peak_lr",
                format!("must be > 0, got {}", self.peak_lr),
            ));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(ConfigError::new(
                "eps",
                format!("must be > 0, got {}", self.eps),
            ));
        }
        if !(self.clipsnr > 0.0) {
            return Err(ConfigError::new(
                "clipsnr",
                format!("must be > 0, got {}", self.clipsnr),
            ));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(ConfigError::new(
                "delta",
                format!("must be > 0, got {}", self.delta),
            ));
        }
        if !(0.0..1.0).contains(&self.beta3) {
            return Err(ConfigError::new(
                "beta3",
                format!("must lie in [0, 1), got {}", self.beta3),
            ));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return Err(ConfigError::new(
                    "grad_clip",
                    format!("must be > 0, got {c}"),
                ));
            }
        }
        self.lr
            .validate()
            .map_err(|e| ConfigError::from_schedule("lr", e))?;
        match self.lr {
            ScheduleSpec::Constant { .. } | ScheduleSpec::LrWarmupCosine { .. } => {}
            ref other => {
                return Err(ConfigError::new(
                    "lr.kind",
                    format!("`{}` is not a learning-rate rule", other.kind_name()),
                ))
            }
        }
        self.weight_decay
            .validate()
            .map_err(|e| ConfigError::from_schedule("weight_decay", e))?;
        match self.weight_decay {
            ScheduleSpec::Constant { value } if value < 0.0 => {
                return Err(ConfigError::new("weight_decay.value", "must be >= 0"))
            }
            ScheduleSpec::Constant { .. }
            | ScheduleSpec::DecayingWd { .. }
            | ScheduleSpec::ConstantWd { .. } => {}
            ref other => {
                return Err(ConfigError::new(
                    "weight_decay.kind",
                    format!("`{}` is not a weight-decay rule", other.kind_name()),
                ))
            }
        }
        let alg = self.algorithm;
        let needs_beta1 = !matches!(alg, Algorithm::Sgd | Algorithm::Nesterov | Algorithm::Muon);
        if needs_beta1 || alg == Algorithm::Muon {
            self.beta1
                .validate_beta()
                .map_err(|e| ConfigError::from_schedule("beta1", e))?;
        }
        if alg.uses_second_moment() {
            self.beta2
                .validate_beta()
                .map_err(|e| ConfigError::from_schedule("beta2", e))?;
        }
        let needs_alpha = matches!(
            alg,
            Algorithm::ADana
                | Algorithm::LogNAdamW
                | Algorithm::AdEMAMix
                | Algorithm::Dana
                | Algorithm::StochasticNesterov
                | Algorithm::DanaStar
                | Algorithm::DanaMk4
                | Algorithm::DanaStarMk4
        );
        if needs_alpha {
            self.alpha
                .validate()
                .map_err(|e| ConfigError::from_schedule("alpha", e))?;
            match self.alpha {
                ScheduleSpec::Constant { value } if value < 0.0 => {
                    return Err(ConfigError::new("alpha.value", "must be >= 0"))
                }
                ScheduleSpec::Constant { .. }
                | ScheduleSpec::DampingDecaying { .. }
                | ScheduleSpec::DampingConstant { .. }
                | ScheduleSpec::Undamped { .. }
                | ScheduleSpec::AdemamixAlphaWarmup { .. } => {}
                ref other => {
                    return Err(ConfigError::new(
                        "alpha.kind",
                        format!("`{}` is not a damping rule", other.kind_name()),
                    ))
                }
            }
        }
        if matches!(alg, Algorithm::DanaMk4 | Algorithm::DanaStarMk4) && self.kappa().is_none() {
            return Err(ConfigError::new(
                "alpha.kind",
                "MK4 variants read κ from a damping-decaying or damping-constant rule",
            ));
        }
        if alg == Algorithm::Muon {
            let m = &self.muon;
            if m.ns_steps == 0 {
                return Err(ConfigError::new("muon.ns_steps", "must be >= 1"));
            }
            if !(m.matched_rms > 0.0) {
                return Err(ConfigError::new("muon.matched_rms", "must be > 0"));
            }
            if !(0.0..1.0).contains(&m.momentum) {
                return Err(ConfigError::new("muon.momentum", "must lie in [0, 1)"));
            }
            if !(m.ns_eps >= 0.0) {
                return Err(ConfigError::new("muon.ns_eps", "must be >= 0"));
            }
            if let Some(lr) = m.fallback_peak_lr {
                if !(lr > 0.0) {
                    return Err(ConfigError::new("muon.fallback_peak_lr", "must be > 0"));
                }
            }
        }
        Ok(())
    }
}

/// Parameters of one block, row-major when `is_matrix`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBlock {
    pub values: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
    pub is_matrix: bool,
}

impl ParamBlock {
    pub fn vector(values: Vec<f64>) -> Self {
        let rows = values.len();
        Self {
            values,
            rows,
            cols: 1,
            is_matrix: false,
        }
    }

    pub fn matrix(values: Vec<f64>, rows: usize, cols: usize) -> Self {
        assert_eq!(
            values.len(),
            rows * cols,
            "matrix shape does not match data"
        );
        Self {
            values,
            rows,
            cols,
            is_matrix: true,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Buffers for one block. Unused buffers stay empty.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    /// First moment (long EMA for AdEMAMix, SGD-style buffer for Muon and
    /// the extra-gradient/EMA Nesterov forms).
    pub m: Vec<f64>,
    /// Second moment.
    pub s: Vec<f64>,
    /// Short EMA.
    pub m3: Vec<f64>,
    pub tau: Vec<f64>,
    /// Look-ahead point of the two-sequence Nesterov form.
    pub y: Vec<f64>,
    /// Running products Π β used by bias correction.
    pub beta1_prod: f64,
    pub beta2_prod: f64,
    pub beta3_prod: f64,
}

impl OptimizerState {
    pub fn new(block: &ParamBlock, cfg: &OptimizerConfig) -> Self {
        let n = block.len();
        let alg = cfg.algorithm;
        let zeros = |on: bool| if on { vec![0.0; n] } else { Vec::new() };
        let two_sequence = alg == Algorithm::Nesterov
            && cfg.nesterov.formulation == NesterovFormulation::TwoSequence;
        let needs_m3 = alg == Algorithm::AdEMAMix || (alg == Algorithm::ADana && cfg.beta3 > 0.0);
        Self {
            step: 0,
            m: zeros(alg != Algorithm::Sgd),
            s: zeros(alg.uses_second_moment()),
            m3: zeros(needs_m3),
            tau: zeros(alg.uses_tau()),
            y: if two_sequence {
                block.values.clone()
            } else {
                Vec::new()
            },
            beta1_prod: 1.0,
            beta2_prod: 1.0,
            beta3_prod: 1.0,
        }
    }

    /// Point at which the next gradient must be evaluated.
    pub fn query_point<'a>(&'a self, block: &'a ParamBlock) -> &'a [f64] {
        if self.y.is_empty() {
            &block.values
        } else {
            &self.y
        }
    }
}

/// Inputs shared by every update rule at one step.
pub(crate) struct StepCtx {
    pub t: f64,
    /// γ(t).
    pub lr_mult: f64,
    /// γ(t)·γ*.
    pub lr: f64,
    /// λ(t).
    pub wd: f64,
}

/// One update in place. On error neither the block nor the state changes.
pub fn step(
    cfg: &OptimizerConfig,
    block: &mut ParamBlock,
    state: &mut OptimizerState,
    grad: &[f64],
) -> Result<(), StepError> {
    if grad.len() != block.len() {
        return Err(StepError::ShapeMismatch {
            expected: block.len(),
            got: grad.len(),
        });
    }
    if let Some((index, &value)) = grad.iter().enumerate().find(|(_, g)| !g.is_finite()) {
        return Err(StepError::NonFiniteGradient { index, value });
    }
    let clipped;
    let g = match cfg.grad_clip {
        Some(c) => {
            let norm = grad.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > c {
                let k = c / norm;
                clipped = grad.iter().map(|x| x * k).collect::<Vec<_>>();
                &clipped[..]
            } else {
                grad
            }
        }
        None => grad,
    };
    let t = state.step as f64;
    let lr_mult = cfg.lr.eval(t);
    let ctx = StepCtx {
        t,
        lr_mult,
        lr: lr_mult * cfg.peak_lr,
        wd: cfg.weight_decay.eval(t),
    };
    match cfg.algorithm {
        Algorithm::Sgd => dana::sgd(&ctx, block, g),
        Algorithm::AdamW => adaptive::adamw(cfg, &ctx, block, state, g),
        Algorithm::ADana | Algorithm::LogNAdamW => adaptive::adana(cfg, &ctx, block, state, g),
        Algorithm::LogAdamW => adaptive::log_adamw(cfg, &ctx, block, state, g),
        Algorithm::AdEMAMix => adaptive::ademamix(cfg, &ctx, block, state, g),
        Algorithm::Dana | Algorithm::StochasticNesterov => dana::dana(cfg, &ctx, block, state, g),
        Algorithm::Nesterov => nesterov::step(cfg, &ctx, block, state, g),
        Algorithm::DanaStar => dana::dana_star(cfg, &ctx, block, state, g),
        Algorithm::DanaMk4 => dana::dana_mk4(cfg, &ctx, block, state, g),
        Algorithm::DanaStarMk4 => dana::dana_star_mk4(cfg, &ctx, block, state, g),
        Algorithm::Muon => muon::step(cfg, &ctx, block, state, g),
    }
    state.step += 1;
    Ok(())
}

/// Entrywise sign with sign(0) = 0.
#[inline]
pub(crate) fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}
