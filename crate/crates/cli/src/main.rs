//! `stackelberg` command-line driver.
//!
//! Exit codes: 0 ok, 1 verification failure, 2 config error, 3 numerical or
//! I/O failure.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use stackelberg_core::Error;

#[derive(Parser, Debug)]
#[command(
    name = "stackelberg",
    version,
    about = "Stackelberg execution solver and simulator"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// TOML run configuration; defaults to the embedded base config.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub paths: Option<usize>,
    #[arg(long, global = true)]
    pub rank: Option<usize>,
    /// Number of grid nodes.
    #[arg(long, global = true)]
    pub grid: Option<usize>,
    /// Worker threads; defaults to the number of available cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Subcommand, Debug, Clone)]
pub enum Command {
    /// Feedback gain and exponentials on the grid.
    Riccati,
    /// Transcendental roots and eigenvalues for the unpenalised kernel.
    Spectrum,
    /// The kernel G on a coarse grid.
    Kernel {
        #[arg(long, default_value_t = 41)]
        points: usize,
    },
    /// Major strategy against the benchmark.
    Solve,
    /// Monte Carlo paths of the full market.
    Simulate,
    /// Savings of the optimal strategy over the benchmark on common random numbers.
    Compare,
    /// Intraday volume curve.
    Volume,
    /// Run the oracle battery.
    Verify,
    /// Regenerate the data behind a figure from its canned config.
    Reproduce { figure: Figure },
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    Fig1,
    Fig2,
    Fig3,
    Fig4,
    Fig5,
}

#[derive(Debug)]
pub enum Failure {
    Verification(String),
    Core(Error),
    Io(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

impl Failure {
    pub(crate) fn exit_code(&self) -> u8 {
        match self {
            Failure::Verification(_) => 1,
            Failure::Core(e) if e.is_config_error() => 2,
            Failure::Core(_) | Failure::Io(_) => 3,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli.common, &cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Verification(msg) => eprintln!("verification failed: {msg}"),
                Failure::Core(e) => eprintln!("error: {e}"),
                Failure::Io(msg) => eprintln!("i/o error: {msg}"),
            }
            ExitCode::from(f.exit_code())
        }
    }
}
