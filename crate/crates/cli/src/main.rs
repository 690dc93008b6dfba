//! `metaeval`: meta-evaluation of human and automatic system-level
//! estimators.

mod commands;
mod config;

use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use crate::commands::{BreakevenArgs, DecomposeArgs, PowerArgs, SynthArgs};
use crate::config::{input_error, Common, InputError};

/// Worker threads for resampling; logical core count when unset.
const WORKERS_ENV: &str = "METAEVAL_WORKERS";

#[derive(Parser, Debug)]
#[command(name = "metaeval", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Ingest a dataset and print per-group counts.
    Validate(#[command(flatten)] Common),
    /// Decompose pairwise error into noise, bias and variance terms.
    Decompose {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        args: DecomposeArgs,
    },
    /// Judgment-count error curves and metric breakeven points.
    Breakeven {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        args: BreakevenArgs,
    },
    /// Required judgment counts over a grid of noise levels and effect sizes.
    Power {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        args: PowerArgs,
    },
    /// Paired bootstrap significance and human/metric co-occurrence.
    Significance(#[command(flatten)] Common),
    /// Metric agreement with its main prediction as test sets grow.
    Convergence(#[command(flatten)] Common),
    /// Generate a synthetic dataset with ground truth.
    Synth {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        args: SynthArgs,
    },
}

fn configure_workers() -> Result<()> {
    let Ok(value) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| input_error(format!("{WORKERS_ENV} must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    configure_workers()?;
    match &cli.command {
        Command::Validate(c) => commands::validate(c),
        Command::Decompose { common, args } => commands::decompose(common, args),
        Command::Breakeven { common, args } => commands::breakeven(common, args),
        Command::Power { common, args } => commands::power(common, args),
        Command::Significance(c) => commands::significance(c),
        Command::Convergence(c) => commands::convergence(c),
        Command::Synth { common, args } => commands::synth(common, args),
    }
}

/// 2 for input errors, 1 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<metaeval_core::Error>() {
            return if e.is_input_error() { 2 } else { 1 };
        }
        if cause.downcast_ref::<InputError>().is_some() {
            return 2;
        }
    }
    1
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
