mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use crate::commands::Common;
use crate::config::RunConfig;

/// Spin-dependent Bohmian arrival times and spin-POVM audits.
#[derive(Debug, Parser)]
#[command(name = "arrival", version)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// Base seed; overrides the config's `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    /// Output directory; overrides the config's `out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Arrival-time distributions for each configured direction.
    ArrivalDist {
        #[arg(long)]
        config: PathBuf,
    },
    /// Mean arrival time against the polar angle, with a cosine fit.
    MeanVsAlpha {
        #[arg(long)]
        config: PathBuf,
    },
    /// Runs every spin-POVM feasibility test on fresh or saved distributions.
    PovmAudit {
        #[arg(long, required_unless_present = "input")]
        config: Option<PathBuf>,
        /// Directory holding a `distributions.toml` index.
        #[arg(long, conflicts_with = "config")]
        input: Option<PathBuf>,
    },
    /// Signaling protocol decode accuracy.
    Signaling {
        #[arg(long)]
        config: PathBuf,
        /// Use saved distributions instead of running ensembles.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Extracts the POVM of a finite measurement model.
    ToyPovm {
        #[arg(long)]
        experiment: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if cli.global.workers > 0 {
        pool = pool.num_threads(cli.global.workers);
    }
    pool.build_global().context("starting worker pool")?;
    let common = Common {
        seed: cli.global.seed,
        workers: rayon::current_num_threads(),
        out: cli.global.out,
    };
    match cli.command {
        Command::ArrivalDist { config } => commands::arrival_dist(&common, &RunConfig::load(&config)?),
        Command::MeanVsAlpha { config } => commands::mean_vs_alpha(&common, &RunConfig::load(&config)?),
        Command::PovmAudit { config, input } => {
            let loaded = config.as_deref().map(RunConfig::load).transpose()?;
            commands::povm_audit(&common, loaded.as_ref(), input.as_deref())
        }
        Command::Signaling { config, input } => {
            commands::signaling_cmd(&common, Some(&RunConfig::load(&config)?), input.as_deref())
        }
        Command::ToyPovm { experiment } => commands::toy_povm(&common, &experiment),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
