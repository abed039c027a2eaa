//! Power-law random features.
//!
//! Data `x ∈ R^v` has independent coordinates `x_j = j^(−ρ) z_j`, targets are
//! `⟨x, b⟩` with `b_j = j^(−η)`, and the model predicts `⟨Wᵀx, θ⟩` with a
//! frozen `W ∈ R^(v×d)` of N(0, 1/d) entries. The population risk
//! `½ Σ_j j^(−2ρ) ((Wθ − b)_j)²` is exact, no sampling needed.

mod moe;
mod train;

pub use moe::MoePlrfProblem;
pub use train::{run_training, Cadence, RunPoint, RunRecord, TrainOptions, DIVERGENCE_FACTOR};

use crate::rng::SeededRng;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlrfError {
    #[error("{field}: {reason}")]
    InvalidSpec { field: &'static str, reason: String },
    #[error("expected {expected} entries, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
}

/// Anything the training loop can optimize: a flat parameter vector, an exact
/// risk and a sampled gradient.
pub trait Problem: Sync {
    /// Number of parameters.
    fn dim(&self) -> usize;
    /// (rows, cols) when the parameters form a matrix.
    fn matrix_shape(&self) -> Option<(usize, usize)>;
    fn risk(&self, theta: &[f64]) -> f64;
    /// Writes the minibatch gradient at `theta` into `grad`; `data` drives
    /// the samples and `route` any auxiliary randomness.
    fn sample_grad(
        &self,
        theta: &[f64],
        batch: usize,
        data: &mut SeededRng,
        route: &mut SeededRng,
        grad: &mut [f64],
    );
    fn describe(&self) -> String;
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlrfProblem {
    pub d: usize,
    pub hidden_dim: usize,
    pub rho: f64,
    pub eta: f64,
    pub seed: u64,
    /// Standard deviation of additive target noise.
    pub label_noise: f64,
    /// Row-major hidden_dim × d.
    w: Vec<f64>,
    b: Vec<f64>,
    /// j^(−ρ).
    scale: Vec<f64>,
}

/// Samples drawn for one step: `x` is batch × hidden_dim row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

impl PlrfProblem {
    pub fn build(
        d: usize,
        hidden_dim: usize,
        rho: f64,
        eta: f64,
        seed: u64,
    ) -> Result<Self, PlrfError> {
        let bad = |field, reason: &str| PlrfError::InvalidSpec {
            field,
            reason: reason.to_string(),
        };
        if d == 0 {
            return Err(bad("d", "must be >= 1"));
        }
        if hidden_dim == 0 {
            return Err(bad("hidden_dim", "must be >= 1"));
        }
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(bad("rho", "must be > 0"));
        }
        if !eta.is_finite() {
            return Err(bad("eta", "must be finite"));
        }
        let mut rng = SeededRng::new(seed);
        let sd = (1.0 / d as f64).sqrt();
        let w = (0..hidden_dim * d).map(|_| sd * rng.normal()).collect();
        let b = (1..=hidden_dim).map(|j| (j as f64).powf(-eta)).collect();
        let scale = (1..=hidden_dim).map(|j| (j as f64).powf(-rho)).collect();
        Ok(Self {
            d,
            hidden_dim,
            rho,
            eta,
            seed,
            label_noise: 0.0,
            w,
            b,
            scale,
        })
    }

    /// hidden_dim = 3d.
    pub fn with_default_ratio(d: usize, rho: f64, eta: f64, seed: u64) -> Result<Self, PlrfError> {
        Self::build(d, 3 * d, rho, eta, seed)
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    /// Variance of coordinate j (1-based): j^(−2ρ).
    pub fn eigenvalue(&self, j: usize) -> f64 {
        self.scale[j - 1] * self.scale[j - 1]
    }

    /// Draws one sample into `x`; returns its target.
    #[inline]
    pub(crate) fn sample_into(&self, rng: &mut SeededRng, x: &mut [f64]) -> f64 {
        let mut y = 0.0;
        for j in 0..self.hidden_dim {
            let xj = self.scale[j] * rng.normal();
            x[j] = xj;
            y += xj * self.b[j];
        }
        if self.label_noise > 0.0 {
            y += self.label_noise * rng.normal();
        }
        y
    }

    pub fn sample_batch(&self, batch: usize, rng: &mut SeededRng) -> Batch {
        let mut x = vec![0.0; batch * self.hidden_dim];
        let y = x
            .chunks_mut(self.hidden_dim)
            .map(|row| self.sample_into(rng, row))
            .collect();
        Batch { x, y }
    }

    /// out = Wᵀx.
    #[inline]
    pub fn features(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (row, &xj) in self.w.chunks_exact(self.d).zip(x) {
            for (o, &wjk) in out.iter_mut().zip(row) {
                *o += xj * wjk;
            }
        }
    }

    fn check(&self, expected: usize, got: usize) -> Result<(), PlrfError> {
        if expected == got {
            Ok(())
        } else {
            Err(PlrfError::ShapeMismatch { expected, got })
        }
    }

    /// `(1/B) Σ_k (⟨Wᵀx_k, θ⟩ − y_k) Wᵀx_k`.
    pub fn stochastic_grad(&self, theta: &[f64], batch: &Batch) -> Result<Vec<f64>, PlrfError> {
        self.check(self.d, theta.len())?;
        self.check(batch.len() * self.hidden_dim, batch.x.len())?;
        let mut grad = vec![0.0; self.d];
        let mut feat = vec![0.0; self.d];
        for (x, &y) in batch.x.chunks_exact(self.hidden_dim).zip(&batch.y) {
            self.features(x, &mut feat);
            let r = dot(&feat, theta) - y;
            for (g, f) in grad.iter_mut().zip(&feat) {
                *g += r * f;
            }
        }
        let inv = 1.0 / batch.len() as f64;
        grad.iter_mut().for_each(|g| *g *= inv);
        Ok(grad)
    }

    /// `½ mean_k (⟨Wᵀx_k, θ⟩ − y_k)²`.
    pub fn batch_loss(&self, theta: &[f64], batch: &Batch) -> Result<f64, PlrfError> {
        self.check(self.d, theta.len())?;
        let mut feat = vec![0.0; self.d];
        let mut total = 0.0;
        for (x, &y) in batch.x.chunks_exact(self.hidden_dim).zip(&batch.y) {
            self.features(x, &mut feat);
            let r = dot(&feat, theta) - y;
            total += r * r;
        }
        Ok(0.5 * total / batch.len() as f64)
    }

    /// Wθ − b.
    pub fn residual(&self, theta: &[f64]) -> Vec<f64> {
        self.w
            .chunks_exact(self.d)
            .zip(&self.b)
            .map(|(row, bj)| dot(row, theta) - bj)
            .collect()
    }

    /// `½ Σ_j j^(−2ρ) ((Wθ − b)_j)²`.
    pub fn population_risk(&self, theta: &[f64]) -> f64 {
        let mut total = 0.0;
        for ((row, bj), sj) in self.w.chunks_exact(self.d).zip(&self.b).zip(&self.scale) {
            let r = dot(row, theta) - bj;
            total += sj * sj * r * r;
        }
        0.5 * total
    }

    /// Gradient of the population risk, `Wᵀ diag(j^(−2ρ)) (Wθ − b)`.
    pub fn population_grad(&self, theta: &[f64]) -> Vec<f64> {
        let mut grad = vec![0.0; self.d];
        for ((row, bj), sj) in self.w.chunks_exact(self.d).zip(&self.b).zip(&self.scale) {
            let r = sj * sj * (dot(row, theta) - bj);
            for (g, w) in grad.iter_mut().zip(row) {
                *g += r * w;
            }
        }
        grad
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Problem for PlrfProblem {
    fn dim(&self) -> usize {
        self.d
    }

    fn matrix_shape(&self) -> Option<(usize, usize)> {
        None
    }

    fn risk(&self, theta: &[f64]) -> f64 {
        self.population_risk(theta)
    }

    fn sample_grad(
        &self,
        theta: &[f64],
        batch: usize,
        data: &mut SeededRng,
        _route: &mut SeededRng,
        grad: &mut [f64],
    ) {
        let mut x = vec![0.0; self.hidden_dim];
        let mut feat = vec![0.0; self.d];
        grad.iter_mut().for_each(|g| *g = 0.0);
        for _ in 0..batch {
            let y = self.sample_into(data, &mut x);
            self.features(&x, &mut feat);
            let r = dot(&feat, theta) - y;
            for (g, f) in grad.iter_mut().zip(&feat) {
                *g += r * f;
            }
        }
        let inv = 1.0 / batch as f64;
        grad.iter_mut().for_each(|g| *g *= inv);
    }

    fn describe(&self) -> String {
        format!(
            "plrf d={} v={} rho={} eta={} seed={}",
            self.d, self.hidden_dim, self.rho, self.eta, self.seed
        )
    }
}
