//! `optlab run`: execute one config into an output directory with a manifest.

use crate::config::*;
use crate::error::{CliError, Result};
use crate::io::{build_id, sha256_hex, Manifest, OutputDir, RunEntry};
use crate::tables;
use optlab::divergence::ZProcessConfig;
use optlab::plrf::{run_training, Problem, RunRecord, TrainOptions};
use rayon::prelude::*;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Replaces the config's seed list.
    pub seed: Option<u64>,
    /// Thread count for independent runs; `None` uses all cores.
    pub workers: Option<usize>,
    /// Add a wall_ms column to run CSVs. Off by default: timings break
    /// byte-for-byte reproducibility.
    pub timing: bool,
    /// Parent of the experiment directory.
    pub out_root: PathBuf,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub manifest: PathBuf,
    pub runs: Vec<RunEntry>,
    pub notes: Vec<String>,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn run_config_file(path: &Path, opts: &RunOptions) -> Result<RunSummary> {
    let (cfg, bytes) = read_config(path)?;
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("experiment")
        .to_string();
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    run_config(&cfg, &bytes, &stem, &base, opts)
}

/// `config_dir` anchors relative input paths; `name` is the directory used
/// when the config has no `output`.
pub fn run_config(
    cfg: &RawConfig,
    bytes: &[u8],
    name: &str,
    config_dir: &Path,
    opts: &RunOptions,
) -> Result<RunSummary> {
    let mut cfg = cfg.clone();
    if let Some(s) = opts.seed {
        cfg.seeds = vec![s];
    }
    validate_shape(&cfg)?;
    let out_name = cfg.output.clone().unwrap_or_else(|| name.to_string());
    if out_name.is_empty() || out_name.contains("..") {
        return Err(CliError::validation(
            "output",
            "must be a plain relative directory name",
        ));
    }
    let mut manifest = Manifest {
        kind: cfg.kind.name().into(),
        build: build_id(),
        config: name.to_string(),
        config_sha256: sha256_hex(bytes),
        seeds: cfg.seeds.clone(),
        files: Vec::new(),
        runs: Vec::new(),
        notes: Vec::new(),
    };
    let dir = opts.out_root.join(&out_name);

    if cfg.kind.trains() {
        // Everything is validated and built before the first run starts.
        let jobs = training_jobs(&cfg)?;
        let problem = cfg
            .problem
            .as_ref()
            .expect("checked by validate_shape")
            .build()?;
        let train = cfg.train.clone().expect("checked by training_jobs");
        let mut out = OutputDir::create(dir.clone())?;
        let problem: &dyn Problem = match &problem {
            BuiltProblem::Plain(p) => p,
            BuiltProblem::Moe(m) => m,
        };
        let work: Vec<(usize, u64)> = (0..jobs.len())
            .flat_map(|j| cfg.seeds.iter().map(move |&s| (j, s)))
            .collect();
        let pool = pool(opts.workers)?;
        let results: Vec<Result<(RunEntry, String)>> = pool.install(|| {
            work.par_iter()
                .map(|&(j, seed)| {
                    let job = &jobs[j];
                    let run_opts = TrainOptions {
                        steps: train.steps,
                        batch: train.batch,
                        cadence: train.cadence,
                        seed,
                    };
                    let record = run_training(problem, &job.optimizer, &run_opts).map_err(|e| {
                        CliError::Runtime(format!("{} seed {seed}: {e}", job.label))
                    })?;
                    let rel = format!("runs/{}_seed{seed}.csv", job.label);
                    let csv = tables::run_csv(&record, opts.timing);
                    crate::io::write_file(&dir.join(&rel), csv.as_bytes())?;
                    Ok((entry(&job.label, &record, &rel), csv))
                })
                .collect()
        });
        let mut summary_rows = Vec::new();
        for (r, &(j, _)) in results.into_iter().zip(&work) {
            let (run, csv) = r?;
            out.files.push(OutputDir::entry(&run.file, csv.as_bytes()));
            summary_rows.push(vec![
                run.label.clone(),
                jobs[j].value.map(|v| v.to_string()).unwrap_or_default(),
                run.seed.to_string(),
                run.algorithm.clone(),
                run.final_risk.map(|x| x.to_string()).unwrap_or_default(),
                if run.diverged {
                    "DIVERGED".into()
                } else {
                    String::new()
                },
            ]);
            manifest.runs.push(run);
        }
        let summary = crate::io::render_csv(
            &[
                "label",
                "value",
                "seed",
                "algorithm",
                "final_risk",
                "status",
            ],
            summary_rows,
        );
        out.write("summary.csv", summary.as_bytes())?;
        return finish(out, manifest);
    }

    match cfg.kind {
        ExperimentKind::DivergenceGrid => {
            let spec = cfg.divergence.as_ref().expect("checked by validate_shape");
            if spec.ps.is_empty() {
                return Err(CliError::validation(
                    "divergence.ps",
                    "needs at least one p",
                ));
            }
            if spec.schedules.is_empty() {
                return Err(CliError::validation(
                    "divergence.schedules",
                    "needs at least one schedule",
                ));
            }
            let mut runs = Vec::new();
            for (i, s) in spec.schedules.iter().enumerate() {
                let z = ZProcessConfig {
                    beta1: s.beta1.clone(),
                    beta2: s.beta2.clone(),
                    p: spec.ps[0],
                    eps: spec.eps,
                    ell_max: spec.ell_max,
                    trials: spec.trials,
                    magnitude: spec.magnitude,
                    scale: spec.scale,
                    seed: 0,
                };
                for (j, &p) in spec.ps.iter().enumerate() {
                    ZProcessConfig { p, ..z.clone() }.validate().map_err(|e| {
                        CliError::validation(format!("divergence.schedules[{i}]/ps[{j}]"), e)
                    })?;
                }
                runs.push((s.id.clone(), z));
            }
            let mut out = OutputDir::create(dir.clone())?;
            for &seed in &cfg.seeds {
                let seeded: Vec<_> = runs
                    .iter()
                    .map(|(id, z)| (id.clone(), ZProcessConfig { seed, ..z.clone() }))
                    .collect();
                let (est, verdicts, notes) = tables::divergence_tables(&seeded, &spec.ps)?;
                out.write(&format!("divergence_seed{seed}.csv"), est.as_bytes())?;
                out.write(&format!("verdicts_seed{seed}.csv"), verdicts.as_bytes())?;
                manifest.notes.extend(notes);
            }
            finish(out, manifest)
        }
        ExperimentKind::FitLr => {
            let fit = cfg.fit.as_ref().expect("checked");
            let points =
                tables::read_lr_points(&resolve(config_dir, fit.input.as_ref().expect("checked")))?;
            let (_, table) = tables::lr_fit_table(&points)?;
            let band = if fit.bootstrap > 0 {
                Some(tables::lr_band_table(
                    &points,
                    &fit.queries,
                    fit.bootstrap,
                    cfg.seeds[0],
                )?)
            } else {
                None
            };
            let mut out = OutputDir::create(dir.clone())?;
            out.write("lr_fit.csv", table.as_bytes())?;
            if let Some((band, csv)) = band {
                out.write("lr_band.csv", csv.as_bytes())?;
                manifest.notes.extend(band.warnings);
            }
            finish(out, manifest)
        }
        ExperimentKind::FitLoss => {
            let fit = cfg.fit.as_ref().expect("checked");
            let curves = tables::read_loss_curves(&resolve(
                config_dir,
                fit.input.as_ref().expect("checked"),
            ))?;
            let (result, table) = tables::loss_fit_table(
                &curves,
                fit.power_law
                    .unwrap_or(optlab::scaling::PowerLawKind::Broken),
                fit.saturation
                    .unwrap_or(optlab::scaling::Saturation::Shared),
                &fit.init,
            )?;
            let mut out = OutputDir::create(dir.clone())?;
            out.write("loss_fit.csv", table.as_bytes())?;
            if !result.converged {
                manifest
                    .notes
                    .push(format!("fit did not converge: {}", result.termination));
            }
            finish(out, manifest)
        }
        ExperimentKind::Multiplier => {
            let fit = cfg.fit.as_ref().expect("checked");
            let baseline = tables::read_compute_loss(&resolve(
                config_dir,
                fit.baseline.as_ref().expect("checked"),
            ))?;
            let target = tables::read_compute_loss(&resolve(
                config_dir,
                fit.target.as_ref().expect("checked"),
            ))?;
            let table = tables::multiplier_table(&baseline, &target, fit.interpolation)?;
            let mut out = OutputDir::create(dir.clone())?;
            out.write("multiplier.csv", table.as_bytes())?;
            finish(out, manifest)
        }
        ExperimentKind::SpectrumFit => {
            let fit = cfg.fit.as_ref().expect("checked");
            let eigs = tables::read_eigenvalues(&resolve(
                config_dir,
                fit.input.as_ref().expect("checked"),
            ))?;
            let table = tables::spectrum_table(&eigs, fit.first, fit.last)?;
            let mut out = OutputDir::create(dir.clone())?;
            out.write("spectrum.csv", table.as_bytes())?;
            finish(out, manifest)
        }
        _ => unreachable!("training kinds handled above"),
    }
}

fn entry(label: &str, record: &RunRecord, file: &str) -> RunEntry {
    RunEntry {
        label: label.to_string(),
        seed: record.seed,
        algorithm: record.algorithm.clone(),
        final_risk: (!record.diverged).then(|| record.final_risk()),
        diverged: record.diverged,
        file: file.to_string(),
    }
}

fn pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        if w == 0 {
            return Err(CliError::validation("--workers", "must be >= 1"));
        }
        b = b.num_threads(w);
    }
    b.build().map_err(|e| CliError::Runtime(e.to_string()))
}

fn finish(out: OutputDir, manifest: Manifest) -> Result<RunSummary> {
    let dir = out.root.clone();
    let runs = manifest.runs.clone();
    let notes = manifest.notes.clone();
    let manifest = out.finish(manifest)?;
    Ok(RunSummary {
        dir,
        manifest,
        runs,
        notes,
    })
}
