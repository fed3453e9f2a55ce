//! `ftsmoe` command-line front end: data preparation, training, forecasting,
//! backtesting, inspection and chart rendering driven by one TOML file.
//!
//! Global flags override the config file and can also be set through the
//! environment: `FTSMOE_CONFIG`, `FTSMOE_SEED` and `FTSMOE_OUT`.
//!
//! Exit codes: 0 ok, 2 usage, 3 data error, 4 model error. Failures print a
//! JSON record `{code, message, context}` on stderr.

pub mod chart;
pub mod commands;
pub mod config;
pub mod error;
pub mod load;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use config::{Overrides, RunConfig};
use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "ftsmoe", version, about = "Sparse mixture-of-experts forecaster for text-augmented price series")]
pub struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true, env = "FTSMOE_CONFIG")]
    pub config: Option<PathBuf>,
    /// Seed for init and sampling; overrides the config.
    #[arg(long, global = true, env = "FTSMOE_SEED")]
    pub seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long, global = true, env = "FTSMOE_OUT")]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Align prices with text vectors and summarize coverage.
    Prepare,
    /// Train from a seeded init and write a checkpoint and log.
    Train,
    /// Forecast the next N steps of one symbol.
    Forecast {
        #[arg(long)]
        symbol: String,
        /// Number of steps to forecast.
        #[arg(long)]
        steps: usize,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Trade the held-out window on one-step forecasts.
    Backtest {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Print parameter counts, expert utilization and the model config.
    Inspect {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Render SVG charts from backtest and forecast files.
    Report {
        /// Input files; defaults to the ones in the output directory.
        inputs: Vec<PathBuf>,
    },
}

pub fn execute(cli: &Cli) -> CliResult<String> {
    let overrides = Overrides { seed: cli.seed, out: cli.out.clone() };
    let cfg = RunConfig::load(cli.config.as_deref(), &overrides)?;
    match &cli.command {
        Command::Prepare => commands::prepare(&cfg),
        Command::Train => commands::train_cmd(&cfg),
        Command::Forecast { symbol, steps, checkpoint } => {
            commands::forecast_cmd(&cfg, symbol, *steps, checkpoint.as_deref())
        }
        Command::Backtest { checkpoint } => commands::backtest_cmd(&cfg, checkpoint.as_deref()),
        Command::Inspect { checkpoint } => commands::inspect_cmd(&cfg, checkpoint.as_deref()),
        Command::Report { inputs } => commands::report_cmd(&cfg, inputs),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind as K;
            if matches!(e.kind(), K::DisplayHelp | K::DisplayVersion | K::DisplayHelpOnMissingArgumentOrSubcommand) {
                print!("{e}");
                return 0;
            }
            let message =
                e.to_string().lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ").to_string();
            eprintln!("{}", CliError::usage(message).with("usage", e.render().to_string().trim()).to_json());
            return 2;
        }
    };
    match execute(&cli) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.code
        }
    }
}
