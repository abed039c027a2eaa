//! Mixture-of-experts PLRF: every sample is routed to one of `m` parameter
//! columns drawn from a Zipf law `p(i) ∝ i^(−ζ)`.
//!
//! Parameters are stored expert-major, so expert `i` owns
//! `theta[i*d .. (i+1)*d]`.

use super::{dot, PlrfError, PlrfProblem, Problem};
use crate::rng::SeededRng;

#[derive(Debug, Clone, PartialEq)]
pub struct MoePlrfProblem {
    pub base: PlrfProblem,
    pub m: usize,
    pub zeta: f64,
    probs: Vec<f64>,
    cumulative: Vec<f64>,
}

impl MoePlrfProblem {
    pub fn new(base: PlrfProblem, m: usize, zeta: f64) -> Result<Self, PlrfError> {
        if m == 0 {
            return Err(PlrfError::InvalidSpec {
                field: "m",
                reason: "must be >= 1".into(),
            });
        }
        if !(zeta >= 0.0 && zeta.is_finite()) {
            return Err(PlrfError::InvalidSpec {
                field: "zeta",
                reason: "must be >= 0".into(),
            });
        }
        let raw: Vec<f64> = (1..=m).map(|i| (i as f64).powf(-zeta)).collect();
        let total: f64 = raw.iter().sum();
        let probs: Vec<f64> = raw.iter().map(|r| r / total).collect();
        let mut acc = 0.0;
        let mut cumulative: Vec<f64> = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        // Guard against the last entry landing a hair under 1.
        *cumulative.last_mut().unwrap() = 1.0;
        Ok(Self {
            base,
            m,
            zeta,
            probs,
            cumulative,
        })
    }

    /// Routing probabilities p(1..=m).
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn route(&self, rng: &mut SeededRng) -> usize {
        if self.m == 1 {
            0
        } else {
            self.cumulative_route(rng)
        }
    }

    fn cumulative_route(&self, rng: &mut SeededRng) -> usize {
        rng.categorical(&self.cumulative)
    }

    /// Expected number of distinct experts hit by a batch of size `b`.
    pub fn expected_experts_hit(&self, b: usize) -> f64 {
        self.probs
            .iter()
            .map(|p| 1.0 - (1.0 - p).powi(b as i32))
            .sum()
    }

    /// Writes per-expert mean gradients into `grad` and returns how many
    /// samples each expert received.
    pub fn routed_grad(
        &self,
        theta: &[f64],
        batch: usize,
        data: &mut SeededRng,
        route: &mut SeededRng,
        grad: &mut [f64],
    ) -> Vec<u32> {
        let d = self.base.d;
        let mut x = vec![0.0; self.base.hidden_dim];
        let mut feat = vec![0.0; d];
        let mut counts = vec![0u32; self.m];
        grad.iter_mut().for_each(|g| *g = 0.0);
        for _ in 0..batch {
            let y = self.base.sample_into(data, &mut x);
            let i = self.route(route);
            counts[i] += 1;
            self.base.features(&x, &mut feat);
            let th = &theta[i * d..(i + 1) * d];
            let r = dot(&feat, th) - y;
            for (g, f) in grad[i * d..(i + 1) * d].iter_mut().zip(&feat) {
                *g += r * f;
            }
        }
        for (i, &c) in counts.iter().enumerate() {
            if c > 0 {
                let inv = 1.0 / c as f64;
                grad[i * d..(i + 1) * d].iter_mut().for_each(|g| *g *= inv);
            }
        }
        counts
    }
}

impl Problem for MoePlrfProblem {
    fn dim(&self) -> usize {
        self.base.d * self.m
    }

    fn matrix_shape(&self) -> Option<(usize, usize)> {
        (self.m > 1).then_some((self.m, self.base.d))
    }

    /// `Σ_i p(i) R(θ_i)`.
    fn risk(&self, theta: &[f64]) -> f64 {
        let d = self.base.d;
        if self.m == 1 {
            return self.base.population_risk(theta);
        }
        self.probs
            .iter()
            .enumerate()
            .map(|(i, p)| p * self.base.population_risk(&theta[i * d..(i + 1) * d]))
            .sum()
    }

    fn sample_grad(
        &self,
        theta: &[f64],
        batch: usize,
        data: &mut SeededRng,
        route: &mut SeededRng,
        grad: &mut [f64],
    ) {
        self.routed_grad(theta, batch, data, route, grad);
    }

    fn describe(&self) -> String {
        format!(
            "moe-{} m={} zeta={}",
            self.base.describe(),
            self.m,
            self.zeta
        )
    }
}
