//! `aif` — train, evaluate, and inspect an energy-aware active-inference
//! controller for a parallel-machine workstation.
//!
//! Exit codes: 0 success · 1 simcheck failure or generic error ·
//! 2 configuration error · 3 numerical failure (message carries the
//! iteration) · 4 corrupt/missing checkpoint · 5 missing/empty CSV.

mod cmd_evaluate;
mod cmd_plot;
mod cmd_simcheck;
mod cmd_train;
mod svg;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use aif_core::Error;

#[derive(Parser)]
#[command(
    name = "aif",
    version,
    about = "Deep active inference for energy-aware workstation control"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train an agent and write run artifacts (CSVs, checkpoints, config snapshot)
    Train {
        /// Run configuration file (flat key = value)
        #[arg(long)]
        config: PathBuf,
        /// Output run directory (created if absent)
        #[arg(long)]
        out: PathBuf,
        /// Override the config's root seed
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Paired evaluation of a checkpoint (or `all-on` / `random`) vs the all-on reference
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        /// Checkpoint path, or the pseudo-policies `all-on` / `random`
        #[arg(long)]
        checkpoint: String,
        #[arg(long)]
        out: PathBuf,
        /// Independent evaluation environments
        #[arg(long, default_value_t = 10)]
        replications: usize,
        /// Measured days per replication
        #[arg(long, default_value_t = 30.0)]
        days: f64,
        /// Discarded all-on warm-up days per replication
        #[arg(long, default_value_t = 10.0)]
        warmup_days: f64,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Statistical and structural self-checks of the simulator
    Simcheck {
        #[arg(long, default_value_t = 1001)]
        seed: u64,
        /// Length of the long-run throughput check
        #[arg(long, default_value_t = 30.0)]
        days: f64,
    },
    /// Render SVG charts from run CSVs (and/or a horizon-sweep CSV)
    Plot {
        /// Run directory containing training.csv and validation.csv
        #[arg(long)]
        run: Option<PathBuf>,
        /// Horizon-sweep CSV (columns: horizon, best_epoch, best_pref, …)
        #[arg(long)]
        sweep: Option<PathBuf>,
        /// Output directory (default: <run>/plots or the sweep's directory)
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } | Error::ConfigParse(_) => 2,
        Error::Numerical { .. } => 3,
        Error::Checkpoint(_) => 4,
        Error::Csv(_) => 5,
        _ => 1,
    }
}

fn dispatch(cli: Cli) -> aif_core::Result<i32> {
    match cli.cmd {
        Cmd::Train { config, out, seed } => {
            cmd_train::cmd_train(&config, &out, seed)?;
            Ok(0)
        }
        Cmd::Evaluate { config, checkpoint, out, replications, days, warmup_days, seed } => {
            cmd_evaluate::cmd_evaluate(
                &config,
                &checkpoint,
                &out,
                replications,
                days,
                warmup_days,
                seed,
            )?;
            Ok(0)
        }
        Cmd::Simcheck { seed, days } => cmd_simcheck::cmd_simcheck(seed, days),
        Cmd::Plot { run, sweep, out } => {
            cmd_plot::cmd_plot(run.as_deref(), sweep.as_deref(), out.as_deref())?;
            Ok(0)
        }
    }
}

fn main() {
    let cli = Cli::parse();
    let code = match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    };
    std::process::exit(code);
}
