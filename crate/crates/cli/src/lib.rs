//! Scenario configs, subcommands and exit-code handling for the `spinpol`
//! binary.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Run(#[from] spinpol::Error),
    /// Norm drift or a failed invariant.
    #[error("INTERNAL: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical(_) => EXIT_NUMERICAL,
            _ => EXIT_USAGE,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "spinpol", version, about = "Two-stage laser-driven free-electron spin polarizer")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Scenario file (TOML). Defaults to the bundled config for the command.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output directory; overrides `outputs.dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Worker threads for sweeps and PINEM grids.
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    pub threads: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one scenario and write densities and observables.
    Simulate,
    /// Heat map of <S_y> over two parameters.
    Sweep {
        #[arg(long, value_enum)]
        figure: Option<Figure>,
    },
    /// Residual PINEM density contrast over transverse beam sizes.
    Pinem,
    /// Run the invariant suite.
    Validate {
        #[arg(long, default_value_t = 20240521)]
        seed: u64,
        /// Randomized draws per property.
        #[arg(long, default_value_t = 20)]
        draws: usize,
    },
    /// Print a bundled scenario file.
    ShowConfig {
        #[arg(value_parser = ["canonical", "fig3a", "fig3b", "figS1"])]
        name: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Figure {
    /// |g| against L_D/L_QR
    #[value(name = "3a")]
    Fig3a,
    /// |g1| against |g2|
    #[value(name = "3b")]
    Fig3b,
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match commands::dispatch(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
