//! Command-line front end. Every command is a thin adapter over
//! `fmfpca_core`: it loads inputs, resolves configuration, calls the library
//! and formats the result.

pub mod commands;
pub mod config;
pub mod error;
pub mod input;

use clap::{Parser, Subcommand};

pub use config::Flags;
pub use error::{CliError, LoadError};

#[derive(Debug, Parser)]
#[command(name = "fmfpca", version, about = "Attractor-space estimation and dimension tests for functional time series")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sequential tests of the attractor dimension.
    TestDim(Flags),
    /// Test whether span(M) lies inside the attractor space.
    TestSubspaceIn(Flags),
    /// Test whether the attractor space lies inside span(M).
    TestSubspaceContains(Flags),
    /// Modified FPCA estimate of the attractor space for a given dimension.
    Estimate(Flags),
    /// Simulate and cache critical values.
    SimulateCv(Flags),
    /// Rejection frequencies of the dimension test on simulated data.
    Montecarlo(Flags),
    /// Logit, centered log-ratio or inverse centered log-ratio of each curve.
    Transform(Flags),
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    use commands::*;
    match cli.command {
        Command::TestDim(f) => test_dim(&config::resolve(f)?),
        Command::TestSubspaceIn(f) => test_subspace_in(&config::resolve(f)?),
        Command::TestSubspaceContains(f) => test_subspace_contains(&config::resolve(f)?),
        Command::Estimate(f) => estimate(&config::resolve(f)?),
        Command::SimulateCv(f) => simulate_cv(&config::resolve(f)?),
        Command::Montecarlo(f) => montecarlo(&config::resolve(f)?),
        Command::Transform(f) => transform(&config::resolve(f)?),
    }
}
