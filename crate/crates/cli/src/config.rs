//! Experiment config: one JSON file per experiment.

use crate::error::{CliError, Result};
use optlab::divergence::MagnitudeLaw;
use optlab::plrf::{Cadence, MoePlrfProblem, PlrfError, PlrfProblem};
use optlab::scaling::{Interpolation, PowerLawInit, PowerLawKind, Saturation};
use optlab::{Algorithm, OptimizerConfig, ScheduleSpec};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    PlrfRun,
    KappaSweep,
    AlphaSweep,
    LrSweep,
    MoeRun,
    DivergenceGrid,
    FitLr,
    FitLoss,
    Multiplier,
    SpectrumFit,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::PlrfRun => "plrf-run",
            Self::KappaSweep => "kappa-sweep",
            Self::AlphaSweep => "alpha-sweep",
            Self::LrSweep => "lr-sweep",
            Self::MoeRun => "moe-run",
            Self::DivergenceGrid => "divergence-grid",
            Self::FitLr => "fit-lr",
            Self::FitLoss => "fit-loss",
            Self::Multiplier => "multiplier",
            Self::SpectrumFit => "spectrum-fit",
        }
    }

    pub fn trains(self) -> bool {
        matches!(
            self,
            Self::PlrfRun | Self::KappaSweep | Self::AlphaSweep | Self::LrSweep | Self::MoeRun
        )
    }
}

/// The file as written. Optimizers stay raw JSON until they are merged over
/// the algorithm's preset.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub problem: Option<ProblemSpec>,
    #[serde(default)]
    pub optimizer: Option<Value>,
    /// Extra optimizers run alongside `optimizer`, keyed by label.
    #[serde(default)]
    pub compare: BTreeMap<String, Value>,
    #[serde(default)]
    pub train: Option<TrainSpec>,
    /// Values for kappa/alpha/lr sweeps.
    #[serde(default)]
    pub sweep: Vec<f64>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Output directory name under the output root.
    #[serde(default)]
    pub output: Option<String>,
    #[serde(default)]
    pub divergence: Option<DivergenceSpec>,
    #[serde(default)]
    pub fit: Option<FitSpec>,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub d: usize,
    /// Defaults to 3d.
    #[serde(default)]
    pub hidden_dim: Option<usize>,
    pub rho: f64,
    pub eta: f64,
    /// Seed of W; run seeds only drive sampling.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub moe: Option<MoeSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MoeSpec {
    pub experts: usize,
    #[serde(default = "one")]
    pub zeta: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSpec {
    pub steps: u64,
    #[serde(default = "one_usize")]
    pub batch: usize,
    #[serde(default = "default_cadence")]
    pub cadence: Cadence,
}

fn one_usize() -> usize {
    1
}

fn default_cadence() -> Cadence {
    Cadence::LogSpaced(50)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZSchedule {
    pub id: String,
    pub beta1: ScheduleSpec,
    pub beta2: ScheduleSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DivergenceSpec {
    pub schedules: Vec<ZSchedule>,
    pub ps: Vec<f64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_ell_max")]
    pub ell_max: usize,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default)]
    pub magnitude: MagnitudeLaw,
    #[serde(default = "one")]
    pub scale: f64,
}

fn default_trials() -> usize {
    1000
}
fn default_ell_max() -> usize {
    3
}
fn default_eps() -> f64 {
    1e-8
}

/// Inputs and options of the fit kinds. Paths are relative to the config file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSpec {
    pub input: Option<PathBuf>,
    pub baseline: Option<PathBuf>,
    pub target: Option<PathBuf>,
    pub power_law: Option<PowerLawKind>,
    pub saturation: Option<Saturation>,
    pub init: PowerLawInit,
    pub interpolation: Interpolation,
    pub bootstrap: usize,
    pub queries: Vec<f64>,
    pub first: Option<usize>,
    pub last: Option<usize>,
}

/// Parse a JSON value into `T`, reporting the failing field as a dotted path
/// under `prefix`.
pub fn from_value<T: serde::de::DeserializeOwned>(value: Value, prefix: &str) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let inner = e.path().to_string();
        let path = match (prefix.is_empty(), inner.as_str()) {
            (true, _) => inner.clone(),
            (false, ".") => prefix.to_string(),
            (false, _) => format!("{prefix}.{inner}"),
        };
        CliError::validation(path, e.into_inner())
    })
}

pub fn parse_config(bytes: &[u8]) -> Result<RawConfig> {
    let value: Value =
        serde_json::from_slice(bytes).map_err(|e| CliError::validation("config", e))?;
    from_value(value, "")
}

pub fn read_config(path: &Path) -> Result<(RawConfig, Vec<u8>)> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok((parse_config(&bytes)?, bytes))
}

/// Overlay `patch` on `base`. A nested schedule whose `kind` changes is
/// replaced rather than merged, so stale fields of the old kind don't leak in.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            let kind_changed = matches!(
                (b.get("kind"), p.get("kind")),
                (Some(old), Some(new)) if old != new
            );
            if kind_changed {
                *b = p;
                return;
            }
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, p) => *slot = p,
    }
}

/// Resolve an optimizer entry: start from the preset of its `algorithm`
/// (default adana) at its `peak_lr` with horizon `steps`, overlay the given
/// fields, then validate. Errors are prefixed with `prefix`.
pub fn resolve_optimizer(raw: &Value, steps: u64, prefix: &str) -> Result<OptimizerConfig> {
    if !raw.is_object() {
        return Err(CliError::validation(prefix, "must be an object"));
    }
    let algorithm: Algorithm = match raw.get("algorithm") {
        Some(v) => from_value(v.clone(), &format!("{prefix}.algorithm"))?,
        None => Algorithm::ADana,
    };
    let peak_lr = match raw.get("peak_lr") {
        Some(v) => v
            .as_f64()
            .ok_or_else(|| CliError::validation(format!("{prefix}.peak_lr"), "must be a number"))?,
        None => OptimizerConfig::default().peak_lr,
    };
    let preset = OptimizerConfig::preset(algorithm, peak_lr, steps.max(1) as f64);
    let mut merged = serde_json::to_value(&preset).map_err(|e| CliError::Runtime(e.to_string()))?;
    merge(&mut merged, raw.clone());
    let cfg: OptimizerConfig = from_value(merged, prefix)?;
    cfg.validate().map_err(|e| {
        let e = e.within(prefix);
        CliError::validation(e.path, e.reason)
    })?;
    Ok(cfg)
}

fn plrf_error(prefix: &str, e: PlrfError) -> CliError {
    match e {
        PlrfError::InvalidSpec { field, reason } => {
            CliError::validation(format!("{prefix}.{field}"), reason)
        }
        other => CliError::validation(prefix, other),
    }
}

/// Either problem the training kinds can run.
pub enum BuiltProblem {
    Plain(PlrfProblem),
    Moe(MoePlrfProblem),
}

impl ProblemSpec {
    pub fn build(&self) -> Result<BuiltProblem> {
        let v = self.hidden_dim.unwrap_or(3 * self.d);
        let base = PlrfProblem::build(self.d, v, self.rho, self.eta, self.seed)
            .map_err(|e| plrf_error("problem", e))?;
        match &self.moe {
            None => Ok(BuiltProblem::Plain(base)),
            Some(m) => MoePlrfProblem::new(base, m.experts, m.zeta)
                .map(BuiltProblem::Moe)
                .map_err(|e| plrf_error("problem.moe", e)),
        }
    }
}

/// One training job before seeds are applied.
#[derive(Debug, Clone)]
pub struct Job {
    pub label: String,
    /// Swept value, if any.
    pub value: Option<f64>,
    pub optimizer: OptimizerConfig,
}

fn set_alpha_field(cfg: &mut OptimizerConfig, which: &str, x: f64) -> Result<()> {
    match (&mut cfg.alpha, which) {
        (ScheduleSpec::DampingDecaying { kappa, .. }, "kappa")
        | (ScheduleSpec::DampingConstant { kappa, .. }, "kappa") => *kappa = x,
        (ScheduleSpec::DampingDecaying { alpha_tilde, .. }, "alpha_tilde")
        | (ScheduleSpec::DampingConstant { alpha_tilde, .. }, "alpha_tilde") => *alpha_tilde = x,
        (other, _) => {
            return Err(CliError::validation(
                "optimizer.alpha.kind",
                format!(
                    "a {which} sweep needs a damping rule, got {}",
                    other.kind_name()
                ),
            ))
        }
    }
    Ok(())
}

fn format_value(x: f64) -> String {
    format!("{x}")
}

/// Expand optimizer + compare + sweep into validated jobs.
pub fn training_jobs(cfg: &RawConfig) -> Result<Vec<Job>> {
    let train = cfg
        .train
        .as_ref()
        .ok_or_else(|| CliError::validation("train", "required for training kinds"))?;
    if train.batch == 0 {
        return Err(CliError::validation("train.batch", "must be >= 1"));
    }
    let raw = cfg
        .optimizer
        .as_ref()
        .ok_or_else(|| CliError::validation("optimizer", "required for training kinds"))?;
    let sweeping = matches!(
        cfg.kind,
        ExperimentKind::KappaSweep | ExperimentKind::AlphaSweep | ExperimentKind::LrSweep
    );
    if sweeping && cfg.sweep.is_empty() {
        return Err(CliError::validation("sweep", "needs at least one value"));
    }
    if !sweeping && !cfg.sweep.is_empty() {
        return Err(CliError::validation(
            "sweep",
            format!("not used by {}", cfg.kind.name()),
        ));
    }
    let mut jobs = Vec::new();
    if sweeping {
        for &x in &cfg.sweep {
            // Overlay the swept value on the raw entry so it is validated like any other field.
            let mut patched = raw.clone();
            let (label, pointer) = match cfg.kind {
                ExperimentKind::KappaSweep => (format!("kappa-{}", format_value(x)), "kappa"),
                ExperimentKind::AlphaSweep => (format!("alpha-{}", format_value(x)), "alpha_tilde"),
                _ => (format!("lr-{}", format_value(x)), "peak_lr"),
            };
            let optimizer = if pointer == "peak_lr" {
                patched["peak_lr"] = Value::from(x);
                resolve_optimizer(&patched, train.steps, "optimizer")?
            } else {
                let mut base = resolve_optimizer(raw, train.steps, "optimizer")?;
                set_alpha_field(&mut base, pointer, x)?;
                base.validate().map_err(|e| {
                    let e = e.within("optimizer");
                    CliError::validation(e.path, format!("{} (sweep value {x})", e.reason))
                })?;
                base
            };
            jobs.push(Job {
                label,
                value: Some(x),
                optimizer,
            });
        }
    } else {
        jobs.push(Job {
            label: "main".into(),
            value: None,
            optimizer: resolve_optimizer(raw, train.steps, "optimizer")?,
        });
    }
    for (name, raw) in &cfg.compare {
        if name.is_empty()
            || !name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
        {
            return Err(CliError::validation(
                format!("compare.{name}"),
                "labels may use letters, digits, '-' and '_'",
            ));
        }
        jobs.push(Job {
            label: name.clone(),
            value: None,
            optimizer: resolve_optimizer(raw, train.steps, &format!("compare.{name}"))?,
        });
    }
    Ok(jobs)
}

/// Config-level checks shared by every kind. Runs before any work starts.
pub fn validate_shape(cfg: &RawConfig) -> Result<()> {
    if cfg.seeds.is_empty() {
        return Err(CliError::validation("seeds", "needs at least one seed"));
    }
    let needs = |field: &str, present: bool| {
        if present {
            Ok(())
        } else {
            Err(CliError::validation(
                field,
                format!("required for {}", cfg.kind.name()),
            ))
        }
    };
    match cfg.kind {
        k if k.trains() => {
            needs("problem", cfg.problem.is_some())?;
            let moe = cfg.problem.as_ref().is_some_and(|p| p.moe.is_some());
            if k == ExperimentKind::MoeRun && !moe {
                return Err(CliError::validation("problem.moe", "required for moe-run"));
            }
            Ok(())
        }
        ExperimentKind::DivergenceGrid => needs("divergence", cfg.divergence.is_some()),
        ExperimentKind::Multiplier => {
            let f = cfg.fit.as_ref();
            needs("fit.baseline", f.is_some_and(|f| f.baseline.is_some()))?;
            needs("fit.target", f.is_some_and(|f| f.target.is_some()))
        }
        _ => needs(
            "fit.input",
            cfg.fit.as_ref().is_some_and(|f| f.input.is_some()),
        ),
    }
}
