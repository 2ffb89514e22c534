//! Command-line orchestration around `lrad-core`: dataset generation,
//! fitting, evaluation and benchmark sweeps, with lossless CSV/JSON outputs.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use config::Overrides;
pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "lrad", version, about = "Time-varying low-rank-plus-diagonal precision estimation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with its ground truth.
    Generate {
        /// Output directory (default: <output root>/<preset>-s<seed>).
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        o: Overrides,
    },
    /// Fit a precision sequence to a windowed dataset.
    Fit {
        /// Dataset directory (with data/window_XXX.csv) or a directory of window files.
        #[arg(long)]
        data: PathBuf,
        /// Output directory (default: <output root>/<dataset name>-fit).
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        o: Overrides,
    },
    /// Score fits against ground truth; repeat --fit/--truth to aggregate runs.
    Eval {
        #[arg(long, required = true)]
        fit: Vec<PathBuf>,
        /// Dataset directory holding truth/; one per --fit, or one shared.
        #[arg(long, required = true)]
        truth: Vec<PathBuf>,
        /// Output directory (default: <output root>/eval).
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        o: Overrides,
    },
    /// Generate, fit and evaluate over a seed grid and a dimension grid.
    Benchmark {
        /// Output directory (default: <output root>/bench-<preset>).
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        o: Overrides,
    },
}

/// Run a parsed command; returns the output directory.
pub fn run(cli: Cli) -> CliResult<PathBuf> {
    match cli.command {
        Command::Generate { out, o } => {
            let cfg = o.resolve()?;
            let out = out.unwrap_or_else(|| {
                cfg.output_root(o.output_root.is_some())
                    .join(format!("{}-s{}", cfg.data.preset, cfg.seed))
            });
            commands::generate(&cfg, &out)?;
            Ok(out)
        }
        Command::Fit { data, out, o } => {
            let cfg = o.resolve()?;
            let out = out.unwrap_or_else(|| {
                let name = data
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "data".into());
                cfg.output_root(o.output_root.is_some()).join(format!("{name}-fit"))
            });
            let summary = commands::fit(&cfg, &data, &out)?;
            eprintln!(
                "{} after {} iterations: objective {:e}, max gradient norm {:e}",
                summary.termination, summary.iterations, summary.objective, summary.max_grad_norm
            );
            Ok(out)
        }
        Command::Eval { fit, truth, out, o } => {
            let cfg = o.resolve()?;
            let out = out.unwrap_or_else(|| cfg.output_root(o.output_root.is_some()).join("eval"));
            let res = commands::eval(&cfg, &fit, &truth, &out)?;
            let a = &res.aggregate;
            eprintln!(
                "{} run(s): AUC {:.4} ± {:.4}, F1 {:.4} ± {:.4}, geodesic error {:.4} ± {:.4}",
                a.runs, a.auc.mean, a.auc.std, a.f1.mean, a.f1.std, a.mean_geodesic_error.mean, a.mean_geodesic_error.std
            );
            Ok(out)
        }
        Command::Benchmark { out, o } => {
            let cfg = o.resolve()?;
            let out = out.unwrap_or_else(|| {
                cfg.output_root(o.output_root.is_some())
                    .join(format!("bench-{}", cfg.data.preset))
            });
            let res = commands::benchmark(&cfg, &out)?;
            for (row, (_, agg)) in res.timing.iter().zip(&res.aggregate) {
                eprintln!(
                    "p={}: {:.3e} s/iteration over {} cells, AUC {:.4} ± {:.4}",
                    row.p, row.secs_per_iteration.mean, row.cells, agg.auc.mean, agg.auc.std
                );
            }
            Ok(out)
        }
    }
}
