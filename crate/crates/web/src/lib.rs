//! Thin wasm-bindgen layer over optlab. Each export takes and returns JSON
//! strings; the `*_json` functions hold the logic and are tested natively.

use optlab::divergence::{simulate_z, ZProcessConfig};
use optlab::plrf::{run_training, Cadence, PlrfProblem, TrainOptions};
use optlab::schedules::ScheduleSpec;
use optlab::{Algorithm, OptimizerConfig};
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

/// Hard caps so a slider can't hang the tab.
pub const MAX_STEPS: u64 = 200_000;
pub const MAX_DIM: usize = 400;
pub const MAX_TRIALS: usize = 20_000;

#[derive(Debug, Serialize)]
pub struct Curve {
    pub t: Vec<f64>,
    pub value: Vec<f64>,
}

/// Evaluate a schedule at `points` log-spaced times in [1, t_max].
pub fn schedule_curve_json(spec: &str, t_max: f64, points: usize) -> Result<String, String> {
    let spec: ScheduleSpec = serde_json::from_str(spec).map_err(|e| e.to_string())?;
    spec.validate().map_err(|e| e.to_string())?;
    if !(t_max >= 1.0 && t_max.is_finite()) || points < 2 {
        return Err("need t_max >= 1 and at least 2 points".into());
    }
    let t: Vec<f64> = (0..points)
        .map(|i| (t_max.ln() * i as f64 / (points - 1) as f64).exp())
        .collect();
    let value = t.iter().map(|&t| spec.eval(t)).collect();
    serde_json::to_string(&Curve { t, value }).map_err(|e| e.to_string())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlrfRequest {
    pub algorithm: Algorithm,
    pub peak_lr: f64,
    /// Only read by algorithms with a damping rule.
    #[serde(default)]
    pub kappa: Option<f64>,
    pub d: usize,
    pub rho: f64,
    pub eta: f64,
    pub steps: u64,
    #[serde(default = "one")]
    pub batch: usize,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> usize {
    1
}

#[derive(Debug, Serialize)]
pub struct PlrfResponse {
    pub iteration: Vec<u64>,
    pub risk: Vec<f64>,
    pub diverged: bool,
    pub describe: String,
}

/// Train on a fresh PLRF problem (hidden_dim = 3d) with constant γ and no
/// weight decay.
pub fn plrf_run_json(request: &str) -> Result<String, String> {
    let req: PlrfRequest = serde_json::from_str(request).map_err(|e| e.to_string())?;
    if req.steps > MAX_STEPS || req.d > MAX_DIM {
        return Err(format!("demo limits: steps <= {MAX_STEPS}, d <= {MAX_DIM}"));
    }
    let problem = PlrfProblem::with_default_ratio(req.d, req.rho, req.eta, req.seed)
        .map_err(|e| e.to_string())?;
    let mut cfg = OptimizerConfig::preset(req.algorithm, req.peak_lr, req.steps.max(1) as f64);
    cfg.weight_decay = ScheduleSpec::constant(0.0);
    if let Some(k) = req.kappa {
        match &mut cfg.alpha {
            ScheduleSpec::DampingDecaying { kappa, .. }
            | ScheduleSpec::DampingConstant { kappa, .. } => *kappa = k,
            _ => {}
        }
    }
    cfg.validate().map_err(|e| e.to_string())?;
    let opts = TrainOptions {
        steps: req.steps,
        batch: req.batch,
        cadence: Cadence::LogSpaced(60),
        seed: req.seed,
    };
    let record = run_training(&problem, &cfg, &opts).map_err(|e| e.to_string())?;
    let resp = PlrfResponse {
        iteration: record.points.iter().map(|p| p.iteration).collect(),
        risk: record.points.iter().map(|p| p.risk).collect(),
        diverged: record.diverged,
        describe: format!("{} on {}", record.algorithm, record.problem),
    };
    serde_json::to_string(&resp).map_err(|e| e.to_string())
}

/// Z-process estimates over a p grid for one (β₁, β₂) pair. `request` is a
/// `ZProcessConfig` without `p`; `ps` is a JSON array.
pub fn z_process_json(request: &str, ps: &str) -> Result<String, String> {
    let base: ZProcessConfig = serde_json::from_str(request).map_err(|e| e.to_string())?;
    let ps: Vec<f64> = serde_json::from_str(ps).map_err(|e| e.to_string())?;
    if base.trials > MAX_TRIALS {
        return Err(format!("demo limit: trials <= {MAX_TRIALS}"));
    }
    let results = ps
        .iter()
        .map(|&p| simulate_z(&ZProcessConfig { p, ..base.clone() }).map_err(|e| e.to_string()))
        .collect::<Result<Vec<_>, _>>()?;
    serde_json::to_string(&results).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn schedule_curve(spec: &str, t_max: f64, points: usize) -> Result<String, JsError> {
    schedule_curve_json(spec, t_max, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn plrf_run(request: &str) -> Result<String, JsError> {
    plrf_run_json(request).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn z_process(request: &str, ps: &str) -> Result<String, JsError> {
    z_process_json(request, ps).map_err(|e| JsError::new(&e))
}
