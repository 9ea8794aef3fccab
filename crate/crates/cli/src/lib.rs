//! The `qnet` command line: rate-model tables, simulated runs, parameter
//! sweeps, repeater-chain key rates and parameter estimation from timetags.

pub mod commands;
pub mod config;
pub mod error;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use commands::estimate::EstimateArgs;
use commands::repeater::RepeaterArgs;
use commands::sweep::SweepArgs;
use commands::WindowGrid;
use config::{FlagOverrides, OutputFormat, RunConfig};
pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "qnet",
    version,
    about = "BBM92 key-distribution simulator and rate model"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rate-model predictions over a grid of coincidence windows.
    Theory {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        grid: WindowGrid,
        #[arg(long, value_enum)]
        format: Option<OutputFormat>,
    },
    /// Simulate a run and measure its key metrics over a grid of windows.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        grid: WindowGrid,
        #[arg(long, value_enum)]
        format: Option<OutputFormat>,
        /// Also write the simulated timetags to this file.
        #[arg(long)]
        timetags: Option<PathBuf>,
    },
    /// Model and simulation side by side while one parameter is swept.
    Sweep(SweepArgs),
    /// Secure key rates of repeater chains over repeater counts, losses and fidelities.
    Repeater(RepeaterArgs),
    /// Estimate brightness, detection resolution and optical error from timetags.
    Estimate(EstimateArgs),
}

/// Options shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// JSON configuration file.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Override one configuration value, e.g. `experiment.loss_alice_db=15`.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    pub sets: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Source pairs (or repeater shots) to simulate.
    #[arg(long)]
    pub shots: Option<u64>,
    /// Output file; standard output when absent.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

impl CommonArgs {
    fn load(&self, format: Option<OutputFormat>) -> CliResult<RunConfig> {
        let flags = FlagOverrides {
            sets: self.sets.clone(),
            seed: self.seed,
            shots: self.shots,
            format,
            output: self.output.clone(),
        };
        RunConfig::load(self.config.as_deref(), &flags)
    }
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Theory {
            common,
            grid,
            format,
        } => {
            let config = common.load(format)?;
            emit(
                config.output.as_deref(),
                &commands::theory::run(&config, &grid)?,
            )
        }
        Command::Simulate {
            common,
            grid,
            format,
            timetags,
        } => {
            let config = common.load(format)?;
            emit(
                config.output.as_deref(),
                &commands::simulate::run(&config, &grid, timetags.as_deref())?,
            )
        }
        Command::Sweep(args) => {
            let config = args.common.load(None)?;
            emit(
                config.output.as_deref(),
                &commands::sweep::run(&config, &args)?,
            )
        }
        Command::Repeater(args) => {
            let config = args.common.load(None)?;
            emit(
                config.output.as_deref(),
                &commands::repeater::run(&config, &args)?,
            )
        }
        Command::Estimate(args) => {
            let config = args.common.load(None)?;
            emit(
                config.output.as_deref(),
                &commands::estimate::run(&config, &args)?,
            )
        }
    }
}

/// Writes `text` to `path`, or to standard output.
pub fn emit(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(path) => fs::write(path, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}
