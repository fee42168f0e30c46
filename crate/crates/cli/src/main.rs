//! `battlife` command-line driver.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 data error,
//! 4 numerical failure.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;

#[derive(Parser)]
#[command(name = "battlife", version, about = "Stacked-ensemble battery capacity prediction")]
struct Cli {
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory receiving every output file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
pub struct DataArgs {
    /// Canonical table CSV, or a raw CSV when `--mapping` is given.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Column mapping JSON for a raw CSV.
    #[arg(long, requires = "data")]
    pub mapping: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Synth {
        #[arg(long)]
        cells: Option<usize>,
        #[arg(long)]
        cycles: Option<usize>,
        #[arg(long)]
        noise: Option<f64>,
        /// Output file, relative to `--out`.
        #[arg(short = 'o', long = "output", default_value = "data.csv")]
        output: PathBuf,
    },
    /// Load a CSV into the canonical table format.
    Ingest {
        #[command(flatten)]
        data: DataArgs,
    },
    /// Correlation heatmap and collinearity pruning.
    Correlate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Fit a model and save it with its preprocessing.
    Train {
        #[command(flatten)]
        data: DataArgs,
        /// Learner family; defaults to the stacked ensemble.
        #[arg(long)]
        model: Option<String>,
    },
    /// Cross-validated comparison of several learners.
    Compare {
        #[command(flatten)]
        data: DataArgs,
        /// Comma-separated roster, e.g. `se,ridge,gbt`.
        #[arg(long, value_delimiter = ',')]
        models: Option<Vec<String>>,
        #[arg(long)]
        folds: Option<usize>,
        #[arg(long)]
        no_holdout: bool,
    },
    /// Shapley attributions, importance, partial dependence and residuals.
    Explain {
        #[command(flatten)]
        data: DataArgs,
        /// Trained model file; defaults to `model.json` under `--out`.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        instances: Option<usize>,
        /// One or two comma-separated features; repeatable.
        #[arg(long)]
        pdp: Vec<String>,
        #[arg(long)]
        resolution: Option<usize>,
        #[arg(long)]
        bins: Option<usize>,
        /// Fail unless every attribution row sums to its prediction.
        #[arg(long)]
        verify: bool,
    },
    /// Random hyperparameter search.
    Tune {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        family: Option<String>,
        /// Search space JSON.
        #[arg(long)]
        space: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
    },
}

/// A failure with its exit code.
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        Self {
            code: 4,
            message: message.into(),
        }
    }
}

impl From<battlife::Error> for Failure {
    fn from(e: battlife::Error) -> Self {
        use battlife::Error as E;
        let code = match e.root() {
            E::InvalidConfig(_) | E::TooManyFolds { .. } => 2,
            E::SingularSystem | E::Numerical(_) | E::NotFitted | E::AllTrialsFailed(_) => 4,
            _ => 3,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).map_err(Failure::usage)?,
        None => RunConfig::default(),
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if cli.out.is_some() {
        cfg.out = cli.out.clone();
    }
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    if let Some(n) = cfg.threads {
        if n < 1 {
            return Err(Failure::usage("--threads must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::usage(e.to_string()))?;
    }
    let out = cfg.out_dir();
    std::fs::create_dir_all(&out).map_err(|e| Failure::usage(format!("{}: {e}", out.display())))?;

    match cli.command {
        Command::Synth {
            cells,
            cycles,
            noise,
            output,
        } => commands::synth(&cfg, cells, cycles, noise, &output),
        Command::Ingest { data } => commands::ingest(&cfg, &data),
        Command::Correlate { data, threshold } => commands::correlate(&cfg, &data, threshold),
        Command::Train { data, model } => commands::train(&cfg, &data, model.as_deref()),
        Command::Compare {
            data,
            models,
            folds,
            no_holdout,
        } => {
            if let Some(m) = models {
                cfg.models = m;
            }
            if let Some(k) = folds {
                cfg.split.fold_count = k;
            }
            if no_holdout {
                cfg.holdout = false;
            }
            commands::compare(&cfg, &data)
        }
        Command::Explain {
            data,
            model,
            samples,
            instances,
            pdp,
            resolution,
            bins,
            verify,
        } => {
            let e = &mut cfg.explain;
            e.model = model.or(e.model.take());
            e.samples = samples.unwrap_or(e.samples);
            e.instances = instances.unwrap_or(e.instances);
            if !pdp.is_empty() {
                e.pdp = pdp;
            }
            e.resolution = resolution.unwrap_or(e.resolution);
            e.bins = bins.unwrap_or(e.bins);
            commands::explain(&cfg, &data, verify)
        }
        Command::Tune {
            data,
            family,
            space,
            trials,
        } => {
            let t = &mut cfg.tune;
            t.family = family.unwrap_or(t.family.clone());
            t.space = space.or(t.space.take());
            t.trials = trials.unwrap_or(t.trials);
            commands::tune(&cfg, &data)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
