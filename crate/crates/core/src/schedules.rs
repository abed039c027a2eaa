//! Time-indexed hyperparameter rules.
//!
//! Every rule is a pure function of the iteration counter `t` (starting at 0).
//! [`ScheduleSpec`] is the serializable description; `eval` assumes a spec that
//! passed [`ScheduleSpec::validate`].

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScheduleError {
    #[error("{field}: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("t = {t} is past the horizon T = {horizon}")]
    OutOfRange { t: f64, horizon: f64 },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ScheduleError {
    ScheduleError::Invalid {
        field,
        reason: reason.into(),
    }
}

fn default_delta() -> f64 {
    8.0
}
fn default_divisor() -> f64 {
    10.0
}
fn default_one() -> f64 {
    1.0
}
fn default_warmup_frac() -> f64 {
    0.02
}
fn default_final_frac() -> f64 {
    0.10
}
fn default_initial_frac() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScheduleSpec {
    Constant {
        value: f64,
    },
    /// β(t) = 1 − δ/(δ + t).
    LogTimeBeta {
        #[serde(default = "default_delta")]
        delta: f64,
    },
    /// λ(t) = ω/(T/Ω + t).
    DecayingWd {
        omega: f64,
        horizon: f64,
        #[serde(default = "default_divisor")]
        divisor: f64,
    },
    /// λ = ω/T.
    ConstantWd {
        omega: f64,
        horizon: f64,
    },
    /// α(t) = α̃ (1 + t)^(1 − κ).
    DampingDecaying {
        #[serde(default = "default_one")]
        alpha_tilde: f64,
        kappa: f64,
    },
    /// α(t) = α̃ T^(−κ) (1 + t).
    DampingConstant {
        #[serde(default = "default_one")]
        alpha_tilde: f64,
        kappa: f64,
        horizon: f64,
    },
    /// α(t) = (δ + t)/δ, the undamped Nesterov weight.
    Undamped {
        #[serde(default = "default_delta")]
        delta: f64,
    },
    /// α(t) = min(t/T_α, 1) α.
    AdemamixAlphaWarmup {
        alpha: f64,
        horizon: f64,
    },
    /// Long-EMA warmup interpolating the half-life from β₃ to β₁.
    AdemamixBeta1Warmup {
        beta1: f64,
        beta3: f64,
        horizon: f64,
    },
    /// Linear ramp from `initial_frac` to 1, then cosine down to `final_frac` at T.
    LrWarmupCosine {
        horizon: f64,
        #[serde(default = "default_warmup_frac")]
        warmup_frac: f64,
        #[serde(default = "default_final_frac")]
        final_frac: f64,
        #[serde(default = "default_initial_frac")]
        initial_frac: f64,
    },
}

impl ScheduleSpec {
    pub fn constant(value: f64) -> Self {
        Self::Constant { value }
    }

    pub fn log_beta(delta: f64) -> Self {
        Self::LogTimeBeta { delta }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Self::Constant { .. } => "constant",
            Self::LogTimeBeta { .. } => "log-time-beta",
            Self::DecayingWd { .. } => "decaying-wd",
            Self::ConstantWd { .. } => "constant-wd",
            Self::DampingDecaying { .. } => "damping-decaying",
            Self::DampingConstant { .. } => "damping-constant",
            Self::Undamped { .. } => "undamped",
            Self::AdemamixAlphaWarmup { .. } => "ademamix-alpha-warmup",
            Self::AdemamixBeta1Warmup { .. } => "ademamix-beta1-warmup",
            Self::LrWarmupCosine { .. } => "lr-warmup-cosine",
        }
    }

    /// Checks every parameter. The `field` of a returned error is the
    /// parameter name as spelled in the config file.
    pub fn validate(&self) -> Result<(), ScheduleError> {
        let finite = |field, x: f64| {
            if x.is_finite() {
                Ok(())
            } else {
                Err(invalid(field, "must be finite"))
            }
        };
        let positive = |field, x: f64| {
            finite(field, x)?;
            if x > 0.0 {
                Ok(())
            } else {
                Err(invalid(field, format!("must be > 0, got {x}")))
            }
        };
        let non_negative = |field, x: f64| {
            finite(field, x)?;
            if x >= 0.0 {
                Ok(())
            } else {
                Err(invalid(field, format!("must be >= 0, got {x}")))
            }
        };
        let unit_open = |field, x: f64, allow_zero: bool| {
            finite(field, x)?;
            let lo_ok = if allow_zero { x >= 0.0 } else { x > 0.0 };
            if lo_ok && x < 1.0 {
                Ok(())
            } else {
                let lo = if allow_zero { "[0" } else { "(0" };
                Err(invalid(field, format!("must lie in {lo}, 1), got {x}")))
            }
        };
        let fraction = |field, x: f64| {
            finite(field, x)?;
            if x > 0.0 && x <= 1.0 {
                Ok(())
            } else {
                Err(invalid(field, format!("must lie in (0, 1], got {x}")))
            }
        };
        match *self {
            Self::Constant { value } => finite("value", value),
            Self::LogTimeBeta { delta } | Self::Undamped { delta } => positive("delta", delta),
            Self::DecayingWd {
                omega,
                horizon,
                divisor,
            } => {
                non_negative("omega", omega)?;
                positive("horizon", horizon)?;
                positive("divisor", divisor)
            }
            Self::ConstantWd { omega, horizon } => {
                non_negative("omega", omega)?;
                positive("horizon", horizon)
            }
            Self::DampingDecaying { alpha_tilde, kappa } => {
                non_negative("alpha_tilde", alpha_tilde)?;
                positive("kappa", kappa)
            }
            Self::DampingConstant {
                alpha_tilde,
                kappa,
                horizon,
            } => {
                non_negative("alpha_tilde", alpha_tilde)?;
                positive("kappa", kappa)?;
                positive("horizon", horizon)
            }
            Self::AdemamixAlphaWarmup { alpha, horizon } => {
                non_negative("alpha", alpha)?;
                positive("horizon", horizon)
            }
            Self::AdemamixBeta1Warmup {
                beta1,
                beta3,
                horizon,
            } => {
                unit_open("beta1", beta1, false)?;
                unit_open("beta3", beta3, true)?;
                positive("horizon", horizon)
            }
            Self::LrWarmupCosine {
                horizon,
                warmup_frac,
                final_frac,
                initial_frac,
            } => {
                positive("horizon", horizon)?;
                fraction("warmup_frac", warmup_frac)?;
                fraction("final_frac", final_frac)?;
                fraction("initial_frac", initial_frac)
            }
        }
    }

    /// Like [`validate`](Self::validate), and additionally requires that the
    /// rule produces EMA coefficients in [0, 1).
    pub fn validate_beta(&self) -> Result<(), ScheduleError> {
        self.validate()?;
        match *self {
            Self::Constant { value } if !(0.0..1.0).contains(&value) => Err(invalid(
                "value",
                format!("an EMA coefficient must lie in [0, 1), got {value}"),
            )),
            Self::Constant { .. } | Self::LogTimeBeta { .. } | Self::AdemamixBeta1Warmup { .. } => {
                Ok(())
            }
            _ => Err(invalid(
                "kind",
                format!("`{}` does not produce an EMA coefficient", self.kind_name()),
            )),
        }
    }

    /// Value at iteration `t`. Horizon-bounded rules clamp `t` to T.
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            Self::Constant { value } => value,
            Self::LogTimeBeta { delta } => 1.0 - delta / (delta + t),
            Self::DecayingWd {
                omega,
                horizon,
                divisor,
            } => omega / (horizon / divisor + t),
            Self::ConstantWd { omega, horizon } => omega / horizon,
            Self::DampingDecaying { alpha_tilde, kappa } => {
                alpha_tilde * (1.0 + t).powf(1.0 - kappa)
            }
            Self::DampingConstant {
                alpha_tilde,
                kappa,
                horizon,
            } => alpha_tilde * horizon.powf(-kappa) * (1.0 + t),
            Self::Undamped { delta } => (delta + t) / delta,
            Self::AdemamixAlphaWarmup { alpha, horizon } => (t / horizon).min(1.0) * alpha,
            Self::AdemamixBeta1Warmup {
                beta1,
                beta3,
                horizon,
            } => ademamix_beta1(t, horizon, beta1, beta3),
            Self::LrWarmupCosine {
                horizon,
                warmup_frac,
                final_frac,
                initial_frac,
            } => warmup_cosine(
                t.min(horizon),
                horizon,
                warmup_frac,
                final_frac,
                initial_frac,
            ),
        }
    }
}

/// β(t) = 1 − δ/(δ + t).
pub fn eval_beta_log(t: f64, delta: f64) -> Result<f64, ScheduleError> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(invalid("delta", format!("must be > 0, got {delta}")));
    }
    if !(t >= 0.0) {
        return Err(invalid("t", format!("must be >= 0, got {t}")));
    }
    Ok(1.0 - delta / (delta + t))
}

/// Damping rule α(t); `spec` must be one of the damping kinds.
pub fn eval_damping(t: f64, spec: &ScheduleSpec) -> Result<f64, ScheduleError> {
    match spec {
        ScheduleSpec::DampingDecaying { .. }
        | ScheduleSpec::DampingConstant { .. }
        | ScheduleSpec::Undamped { .. }
        | ScheduleSpec::AdemamixAlphaWarmup { .. }
        | ScheduleSpec::Constant { .. } => {
            spec.validate()?;
            Ok(spec.eval(t))
        }
        other => Err(invalid(
            "kind",
            format!("`{}` is not a damping rule", other.kind_name()),
        )),
    }
}

/// Weight-decay rule λ(t); `spec` must be `decaying-wd`, `constant-wd` or `constant`.
pub fn eval_weight_decay(t: f64, spec: &ScheduleSpec) -> Result<f64, ScheduleError> {
    match spec {
        ScheduleSpec::DecayingWd { .. }
        | ScheduleSpec::ConstantWd { .. }
        | ScheduleSpec::Constant { .. } => {
            spec.validate()?;
            Ok(spec.eval(t))
        }
        other => Err(invalid(
            "kind",
            format!("`{}` is not a weight-decay rule", other.kind_name()),
        )),
    }
}

/// Learning-rate multiplier; errors past the horizon.
pub fn eval_lr(t: f64, spec: &ScheduleSpec) -> Result<f64, ScheduleError> {
    spec.validate()?;
    match *spec {
        ScheduleSpec::LrWarmupCosine { horizon, .. } if t > horizon => {
            Err(ScheduleError::OutOfRange { t, horizon })
        }
        ScheduleSpec::LrWarmupCosine { .. } | ScheduleSpec::Constant { .. } => Ok(spec.eval(t)),
        ref other => Err(invalid(
            "kind",
            format!("`{}` is not a learning-rate rule", other.kind_name()),
        )),
    }
}

/// Long-EMA warmup with the outer clamp at β₁. `beta3 = 0` takes the limit of
/// the formula: 0 at t = 0 and β₁^(T/t) afterwards.
pub fn eval_ademamix_beta1_warmup(
    t: f64,
    horizon: f64,
    beta1: f64,
    beta3: f64,
) -> Result<f64, ScheduleError> {
    ScheduleSpec::AdemamixBeta1Warmup {
        beta1,
        beta3,
        horizon,
    }
    .validate()?;
    Ok(ademamix_beta1(t, horizon, beta1, beta3))
}

fn ademamix_beta1(t: f64, horizon: f64, beta1: f64, beta3: f64) -> f64 {
    let s = t / horizon;
    let lb1 = beta1.ln();
    if beta3 == 0.0 {
        if t == 0.0 {
            return 0.0;
        }
        return (lb1 / s).exp().min(beta1);
    }
    let lb3 = beta3.ln();
    let exponent = lb3 * lb1 / ((1.0 - s) * lb1 + s * lb3);
    exponent.exp().min(beta1)
}

fn warmup_cosine(
    t: f64,
    horizon: f64,
    warmup_frac: f64,
    final_frac: f64,
    initial_frac: f64,
) -> f64 {
    let warmup = (warmup_frac * horizon).ceil();
    if t < warmup {
        return initial_frac + (1.0 - initial_frac) * t / warmup;
    }
    let span = horizon - warmup;
    if span <= 0.0 {
        return 1.0;
    }
    let progress = (t - warmup) / span;
    final_frac + (1.0 - final_frac) * 0.5 * (1.0 + (PI * progress).cos())
}
