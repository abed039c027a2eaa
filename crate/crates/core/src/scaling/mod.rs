//! Scaling-law analytics: compute formulas, learning-rate and loss power-law
//! fits, compute multipliers, bootstrap bands, LR curvature and spectrum
//! exponents.

mod compute;
mod loss_fit;
mod lr_fit;
mod multiplier;
mod regress;

pub use compute::*;
pub use loss_fit::*;
pub use lr_fit::*;
pub use multiplier::*;
pub use regress::*;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("{field}: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("need at least {needed} distinct model sizes, got {got}")]
    RankDeficient { needed: usize, got: usize },
    #[error("baseline loss is not strictly decreasing in compute at points {points:?}")]
    AmbiguousInversion { points: Vec<(f64, f64)> },
    #[error("parabola has no minimum (curvature {curvature})")]
    NotConvex { curvature: f64 },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> FitError {
    FitError::Invalid {
        field,
        reason: reason.into(),
    }
}
