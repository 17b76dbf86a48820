use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod plot;

/// Identify fractional-order networks with latent nodes and sparse unknown
/// inputs.
#[derive(Debug, Parser)]
#[command(name = "fracnet", version)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override the base seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; machine output goes to standard output when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "FRACNET_THREADS")]
    pub threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Also write SVG line plots next to the machine output.
    #[arg(long, global = true)]
    pub plots: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a parameter file, or the built-in system of a run config.
    Simulate {
        /// Model parameters (JSON).
        #[arg(long, conflicts_with = "config")]
        params: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        steps: usize,
        /// Comma-separated initial observed state.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        initial: Option<Vec<f64>>,
        /// Deterministic trajectory.
        #[arg(long)]
        noiseless: bool,
    },
    /// Fit the latent model described by a run config.
    Fit,
    /// Rolling-origin k-step prediction with a fitted model.
    Predict {
        /// Fit document or parameter file (JSON).
        #[arg(long)]
        model: PathBuf,
        /// Dataset (CSV) holding the model's observed channels in order.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 5)]
        horizon: usize,
        #[arg(long, default_value_t = 0.8)]
        train_fraction: f64,
    },
    /// With-latent against without-latent prediction over seeds.
    Compare,
    /// Reveal hidden channels one at a time and re-run the comparison.
    Sweep,
    /// Estimate per-channel fractional orders by detrended fluctuation
    /// analysis.
    EstimateAlpha {
        #[arg(long)]
        data: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} worker threads: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
