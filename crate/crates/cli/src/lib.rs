//! Command-line runs and file formats for `spinlab-core`.
//!
//! Every command writes plain-text or JSON artifacts stamped with the tool
//! version, the seed and a digest of the run configuration, so a run can be
//! repeated byte for byte.

pub mod commands;
pub mod error;
pub mod formats;
pub mod meta;

use clap::{Parser, Subcommand};

pub use commands::Report;
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "spinlab", version, about = "Spin-correlation and spin-model geodesic experiments")]
pub struct Cli {
    /// Seed for every random choice; recorded in all outputs.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a two-post experiment and write its logbook and pair table.
    Simulate(commands::simulate::SimulateArgs),
    /// Search for a hidden-variable density reproducing the singlet law.
    SolveDist(commands::solve::SolveArgs),
    /// Integrate a geodesic of the spin-model metric.
    Geodesic(commands::geodesic::GeodesicArgs),
    /// Recover mark directions from a logbook or pair table.
    Reconstruct(commands::reconstruct::ReconstructArgs),
}

pub fn run(cli: &Cli) -> Result<Report, CliError> {
    match &cli.command {
        Command::Simulate(a) => commands::simulate::run(a, cli.seed),
        Command::SolveDist(a) => commands::solve::run(a, cli.seed),
        Command::Geodesic(a) => commands::geodesic::run(a, cli.seed),
        Command::Reconstruct(a) => commands::reconstruct::run(a, cli.seed),
    }
}
