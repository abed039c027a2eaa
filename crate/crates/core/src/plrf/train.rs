//! One-pass training loop.

use super::Problem;
use crate::optimizers::{self, OptimizerConfig, OptimizerState, ParamBlock, StepError};
use crate::rng::SeededRng;
use serde::{Deserialize, Serialize};

/// Wall clock for the `wall_ms` column. wasm32-unknown-unknown has no clock
/// in std, so it reads 0 there.
struct Stopwatch(#[cfg(not(target_arch = "wasm32"))] std::time::Instant);

impl Stopwatch {
    fn start() -> Self {
        Self(
            #[cfg(not(target_arch = "wasm32"))]
            std::time::Instant::now(),
        )
    }

    fn elapsed_ms(&self) -> f64 {
        #[cfg(not(target_arch = "wasm32"))]
        return self.0.elapsed().as_secs_f64() * 1e3;
        #[cfg(target_arch = "wasm32")]
        return 0.0;
    }
}

/// A run is flagged diverged once its risk exceeds this multiple of the
/// initial risk.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

/// When to evaluate the population risk. Iteration 0 is always recorded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "value")]
pub enum Cadence {
    Every(u64),
    /// Roughly this many log-spaced iterations in [1, T].
    LogSpaced(usize),
}

impl Cadence {
    /// Sorted, deduplicated iterations in [1, steps]; always includes `steps`.
    pub fn iterations(self, steps: u64) -> Vec<u64> {
        if steps == 0 {
            return Vec::new();
        }
        let mut out: Vec<u64> = match self {
            Cadence::Every(k) => {
                let k = k.max(1);
                (1..=steps / k).map(|i| i * k).collect()
            }
            Cadence::LogSpaced(n) => {
                let n = n.max(2);
                let top = (steps as f64).ln();
                (0..n)
                    .map(|i| (top * i as f64 / (n - 1) as f64).exp().round() as u64)
                    .collect()
            }
        };
        out.push(steps);
        out.retain(|&t| t >= 1 && t <= steps);
        out.sort_unstable();
        out.dedup();
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub steps: u64,
    pub batch: usize,
    pub cadence: Cadence,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunPoint {
    pub iteration: u64,
    pub risk: f64,
    pub samples: u64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub points: Vec<RunPoint>,
    pub diverged: bool,
    pub seed: u64,
    pub problem: String,
    pub algorithm: String,
    /// Final parameters (empty when diverged).
    #[serde(skip)]
    pub theta: Vec<f64>,
}

impl RunRecord {
    pub fn initial_risk(&self) -> f64 {
        self.points[0].risk
    }

    pub fn final_risk(&self) -> f64 {
        if self.diverged {
            f64::INFINITY
        } else {
            self.points.last().map_or(f64::NAN, |p| p.risk)
        }
    }

    pub fn samples(&self) -> u64 {
        self.points.last().map_or(0, |p| p.samples)
    }
}

/// Trains from θ = 0 with fresh samples every step.
///
/// Data samples come from stream 0 of `seed` and routing from stream 1, so
/// problems that ignore routing consume identical data.
pub fn run_training<P: Problem + ?Sized>(
    problem: &P,
    cfg: &OptimizerConfig,
    opts: &TrainOptions,
) -> Result<RunRecord, StepError> {
    let start = Stopwatch::start();
    let n = problem.dim();
    let mut block = match problem.matrix_shape() {
        Some((r, c)) => ParamBlock::matrix(vec![0.0; n], r, c),
        None => ParamBlock::vector(vec![0.0; n]),
    };
    let mut state = OptimizerState::new(&block, cfg);
    let mut data = SeededRng::derive(opts.seed, 0);
    let mut route = SeededRng::derive(opts.seed, 1);
    let mut grad = vec![0.0; n];

    let r0 = problem.risk(&block.values);
    let mut points = vec![RunPoint {
        iteration: 0,
        risk: r0,
        samples: 0,
        wall_ms: 0.0,
    }];
    let limit = DIVERGENCE_FACTOR * r0;
    let mut diverged = !r0.is_finite();
    let evals = opts.cadence.iterations(opts.steps);
    let mut next = evals.iter().peekable();

    let mut t = 0u64;
    while !diverged && t < opts.steps {
        problem.sample_grad(
            state.query_point(&block),
            opts.batch,
            &mut data,
            &mut route,
            &mut grad,
        );
        match optimizers::step(cfg, &mut block, &mut state, &grad) {
            Ok(()) => {}
            Err(StepError::NonFiniteGradient { .. }) => {
                diverged = true;
                break;
            }
            Err(e) => return Err(e),
        }
        t += 1;
        if next.peek() == Some(&&t) {
            next.next();
            let risk = problem.risk(&block.values);
            points.push(RunPoint {
                iteration: t,
                risk,
                samples: t * opts.batch as u64,
                wall_ms: start.elapsed_ms(),
            });
            if !risk.is_finite() || risk > limit {
                diverged = true;
            }
        }
    }
    Ok(RunRecord {
        points,
        diverged,
        seed: opts.seed,
        problem: problem.describe(),
        algorithm: cfg.algorithm.name().to_string(),
        theta: if diverged { Vec::new() } else { block.values },
    })
}
