//! `texnet`: fold planning, augmentation, training, evaluation, statistics and
//! parameter accounting for the texture CNNs.

mod commands;
mod config;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use commands::stats::Metric;
use config::{DataFlags, ExecFlags, ModelFlags, OutFlags, PlanFlags, RunConfig, TrainFlags};

#[derive(Parser, Debug)]
#[command(
    name = "texnet",
    version,
    about = "Texture CNNs for histopathology image classification"
)]
struct Cli {
    /// TOML file with defaults for any setting; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a patient-wise fold plan.
    Split {
        #[command(flatten)]
        data: DataFlags,
        #[command(flatten)]
        plan: PlanFlags,
        #[command(flatten)]
        out: OutFlags,
    },
    /// Train one network per fold.
    Train {
        #[command(flatten)]
        data: DataFlags,
        #[command(flatten)]
        plan: PlanFlags,
        #[command(flatten)]
        model: ModelFlags,
        #[command(flatten)]
        exec: ExecFlags,
        #[command(flatten)]
        train: TrainFlags,
        #[command(flatten)]
        out: OutFlags,
    },
    /// Score trained checkpoints on each fold's test patients.
    Eval {
        #[command(flatten)]
        data: DataFlags,
        #[command(flatten)]
        plan: PlanFlags,
        #[command(flatten)]
        model: ModelFlags,
        #[command(flatten)]
        exec: ExecFlags,
        #[command(flatten)]
        out: OutFlags,
    },
    /// Expand each fold's training images and optionally render previews.
    Augment {
        #[command(flatten)]
        data: DataFlags,
        #[command(flatten)]
        plan: PlanFlags,
        #[command(flatten)]
        model: ModelFlags,
        #[command(flatten)]
        out: OutFlags,
        /// Only this fold.
        #[arg(long)]
        fold: Option<usize>,
        /// Render the first N items of each fold as PNG files.
        #[arg(long, default_value_t = 0)]
        preview: usize,
    },
    /// Friedman ranks, Nemenyi critical distance and CD diagram over metrics reports.
    Stats {
        /// MetricsReport files (metrics.json), one per model.
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        /// Significance level: 0.05 or 0.10.
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, value_enum, default_value_t = Metric::AccuracyPatient)]
        metric: Metric,
        #[command(flatten)]
        out: OutFlags,
    },
    /// Parameter counts of both architectures next to the published values.
    Params {
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
        /// Also write params.json here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Sizes the global thread pool from `TEXNET_THREADS` when set.
fn init_threads() -> Result<()> {
    let Ok(value) = std::env::var("TEXNET_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .with_context(|| format!("TEXNET_THREADS must be a positive integer, got `{value}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    init_threads()?;
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Split { data, plan, out } => {
            data.apply(&mut cfg);
            plan.apply(&mut cfg);
            out.apply(&mut cfg);
            cfg.validate()?;
            commands::split::run(&cfg)
        }
        Command::Train {
            data,
            plan,
            model,
            exec,
            train,
            out,
        } => {
            data.apply(&mut cfg);
            plan.apply(&mut cfg);
            model.apply(&mut cfg);
            exec.apply(&mut cfg);
            train.apply(&mut cfg);
            out.apply(&mut cfg);
            commands::train::run(&cfg, plan.folds.is_some())
        }
        Command::Eval {
            data,
            plan,
            model,
            exec,
            out,
        } => {
            data.apply(&mut cfg);
            plan.apply(&mut cfg);
            model.apply(&mut cfg);
            exec.apply(&mut cfg);
            out.apply(&mut cfg);
            cfg.validate()?;
            commands::eval::run(&cfg)
        }
        Command::Augment {
            data,
            plan,
            model,
            out,
            fold,
            preview,
        } => {
            data.apply(&mut cfg);
            plan.apply(&mut cfg);
            model.apply(&mut cfg);
            out.apply(&mut cfg);
            commands::augment::run(&cfg, plan.folds.is_some(), fold, preview)
        }
        Command::Stats {
            reports,
            alpha,
            metric,
            out,
        } => {
            out.apply(&mut cfg);
            commands::stats::run(&reports, alpha.unwrap_or(cfg.alpha), metric, &cfg.out)
        }
        Command::Params { json, out } => commands::params::run(json, out.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp_secs()
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
