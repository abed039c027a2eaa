use clap::{Parser, Subcommand, ValueEnum};
use optlab::scaling::{Interpolation, PowerLawInit, PowerLawKind, Saturation};
use optlab_cli::config::{parse_config, ExperimentKind};
use optlab_cli::experiments::{run_config, run_config_file, RunOptions, RunSummary};
use optlab_cli::plot::{plot, PlotKind};
use optlab_cli::{io, tables, CliError, Result, OUTPUT_ROOT_ENV};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "optlab",
    version,
    about = "Optimizer experiments on synthetic testbeds, plus scaling-law fits"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Override the config's seed list with this single seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Threads for independent runs (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output table format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Record wall-clock milliseconds in run CSVs.
    #[arg(long, global = true)]
    timing: bool,
    /// Root directory for experiment outputs.
    #[arg(long, global = true, env = OUTPUT_ROOT_ENV, default_value = "optlab-out")]
    out_root: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlotArg {
    RiskCurves,
    FitOverlay,
    MultiplierBars,
}

#[derive(Clone, Copy, ValueEnum)]
enum LawArg {
    Single,
    Broken,
}

#[derive(Clone, Copy, ValueEnum)]
enum SatArg {
    Shared,
    PerCurve,
    Zero,
}

#[derive(Clone, Copy, ValueEnum)]
enum InterpArg {
    Log,
    Linear,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config; writes CSVs and manifest.json.
    Run { config: PathBuf },
    /// Render CSVs to an SVG chart.
    Plot {
        #[arg(value_enum)]
        kind: PlotArg,
        #[arg(required = true)]
        csv: Vec<PathBuf>,
        /// SVG path (default: <out-root>/plots/<kind>.svg).
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Fit the saturated LR law to columns p,lr[,weight].
    FitLr {
        csv: PathBuf,
        /// Bootstrap replicates for a confidence band.
        #[arg(long, default_value_t = 0)]
        bootstrap: usize,
        /// Model sizes to predict at (repeatable).
        #[arg(long = "query")]
        queries: Vec<f64>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Fit power laws to columns tag,c,loss.
    FitLoss {
        csv: PathBuf,
        #[arg(long, value_enum, default_value_t = LawArg::Broken)]
        law: LawArg,
        #[arg(long, value_enum, default_value_t = SatArg::Shared)]
        saturation: SatArg,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Compute multiplier of target over baseline; both with columns c,loss.
    Multiplier {
        baseline: PathBuf,
        target: PathBuf,
        #[arg(long, value_enum, default_value_t = InterpArg::Log)]
        interp: InterpArg,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Z-process grid from a config (kind may be omitted).
    Divergence { config: PathBuf },
    /// Fit 2ρ to a descending `eigenvalue` column.
    Spectrum {
        csv: PathBuf,
        /// 1-based first index of the fit window.
        #[arg(long)]
        first: Option<usize>,
        /// 1-based last index (inclusive).
        #[arg(long)]
        last: Option<usize>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => io::write_file(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn report(summary: &RunSummary) {
    for r in &summary.runs {
        match r.final_risk {
            Some(x) => println!("{} seed {}: final risk {x:e}", r.label, r.seed),
            None => println!("{} seed {}: DIVERGED", r.label, r.seed),
        }
    }
    for n in &summary.notes {
        eprintln!("note: {n}");
    }
    println!("wrote {}", summary.manifest.display());
}

fn execute(cli: Cli) -> Result<()> {
    let Format::Csv = cli.format;
    let opts = RunOptions {
        seed: cli.seed,
        workers: cli.workers,
        timing: cli.timing,
        out_root: cli.out_root.clone(),
    };
    match cli.command {
        Command::Run { config } => report(&run_config_file(&config, &opts)?),
        Command::Divergence { config } => {
            let bytes = std::fs::read(&config).map_err(|e| CliError::io(&config, e))?;
            let mut value: serde_json::Value =
                serde_json::from_slice(&bytes).map_err(|e| CliError::validation("config", e))?;
            match value.get("kind") {
                None => {
                    if let Some(obj) = value.as_object_mut() {
                        obj.insert("kind".into(), "divergence-grid".into());
                    }
                }
                Some(k) if k == "divergence-grid" => {}
                Some(k) => {
                    return Err(CliError::validation(
                        "kind",
                        format!("expected divergence-grid, got {k}"),
                    ))
                }
            }
            let cfg = parse_config(value.to_string().as_bytes())?;
            debug_assert_eq!(cfg.kind, ExperimentKind::DivergenceGrid);
            let stem = config
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("divergence");
            let base = config.parent().map(Path::to_path_buf).unwrap_or_default();
            report(&run_config(&cfg, &bytes, stem, &base, &opts)?);
        }
        Command::Plot { kind, csv, out } => {
            let (kind, name) = match kind {
                PlotArg::RiskCurves => (PlotKind::RiskCurves, "risk-curves"),
                PlotArg::FitOverlay => (PlotKind::FitOverlay, "fit-overlay"),
                PlotArg::MultiplierBars => (PlotKind::MultiplierBars, "multiplier-bars"),
            };
            let inputs: Vec<&Path> = csv.iter().map(PathBuf::as_path).collect();
            let svg = plot(kind, &inputs)?;
            let path =
                out.unwrap_or_else(|| cli.out_root.join("plots").join(format!("{name}.svg")));
            io::write_file(&path, svg.as_bytes())?;
            println!("wrote {}", path.display());
        }
        Command::FitLr {
            csv,
            bootstrap,
            queries,
            out,
        } => {
            let points = tables::read_lr_points(&csv)?;
            let (_, mut text) = tables::lr_fit_table(&points)?;
            if bootstrap > 0 {
                let (band, band_csv) =
                    tables::lr_band_table(&points, &queries, bootstrap, cli.seed.unwrap_or(0))?;
                for w in band.warnings {
                    eprintln!("warning: {w}");
                }
                text.push_str(&band_csv);
            }
            emit(out.as_deref(), &text)?;
        }
        Command::FitLoss {
            csv,
            law,
            saturation,
            out,
        } => {
            let curves = tables::read_loss_curves(&csv)?;
            let kind = match law {
                LawArg::Single => PowerLawKind::Single,
                LawArg::Broken => PowerLawKind::Broken,
            };
            let sat = match saturation {
                SatArg::Shared => Saturation::Shared,
                SatArg::PerCurve => Saturation::PerCurve,
                SatArg::Zero => Saturation::Zero,
            };
            let (fit, text) = tables::loss_fit_table(&curves, kind, sat, &PowerLawInit::default())?;
            if !fit.converged {
                eprintln!("warning: fit did not converge ({})", fit.termination);
            }
            emit(out.as_deref(), &text)?;
        }
        Command::Multiplier {
            baseline,
            target,
            interp,
            out,
        } => {
            let interp = match interp {
                InterpArg::Log => Interpolation::LogCompute,
                InterpArg::Linear => Interpolation::LinearCompute,
            };
            let text = tables::multiplier_table(
                &tables::read_compute_loss(&baseline)?,
                &tables::read_compute_loss(&target)?,
                interp,
            )?;
            emit(out.as_deref(), &text)?;
        }
        Command::Spectrum {
            csv,
            first,
            last,
            out,
        } => {
            let text = tables::spectrum_table(&tables::read_eigenvalues(&csv)?, first, last)?;
            emit(out.as_deref(), &text)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
