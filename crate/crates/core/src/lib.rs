//! Log-time momentum optimizers and the synthetic testbeds used to study them.
//!
//! - [`schedules`]: time-indexed hyperparameter rules (β, α, λ, γ).
//! - [`optimizers`]: per-block update rules (AdamW, ADana, the Dana family, Muon, AdEMAMix, Nesterov).
//! - [`plrf`]: power-law random features, its mixture-of-experts variant and the training loop.
//! - [`divergence`]: Monte-Carlo Z-process under sparse gradients.
//! - [`scaling`]: compute formulas, power-law fits, compute multipliers.

// `!(x > 0.0)` is how NaN gets rejected; indexed loops keep the kernels readable.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod divergence;
pub mod optimizers;
mod par;
pub mod plrf;
pub mod rng;
pub mod scaling;
pub mod schedules;

pub use optimizers::{Algorithm, OptimizerConfig, OptimizerState, ParamBlock, StepError};
pub use schedules::{ScheduleError, ScheduleSpec};
