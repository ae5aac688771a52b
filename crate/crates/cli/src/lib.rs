//! Command-line front end for `dpkf`: scenario files in, JSON and CSV reports out.

pub mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::Options;
pub use config::{Scenario, ScenarioConfig};
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "dpkf", version, about = "Differentially private Kalman filtering: design, compare, simulate")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Instantiate the configured mechanism (solving the design SDP if asked) and write design.json and D.csv.
    Design(CommonArgs),
    /// Monte Carlo run of the configured mechanism; writes sim.json and sim.csv.
    Simulate(CommonArgs),
    /// Analytic (and optionally empirical) MSE of the configured mechanism and both input-perturbation baselines; writes compare.csv.
    Compare(CommonArgs),
    /// Closed-form MSE of the homogeneous scalar example; writes scalar.json.
    ScalarExample(ScalarArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Scenario file (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Overrides `simulation.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `simulation.replications`; for `compare`, enables the empirical columns.
    #[arg(long)]
    pub replications: Option<usize>,
    /// Duality gap accepted as optimal by the SDP solver.
    #[arg(long)]
    pub gap: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ScalarArgs {
    /// Homogeneous scalar scenario; the built-in example is used when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

impl CommonArgs {
    fn options(&self) -> Options {
        Options {
            out: self.out.clone(),
            seed: self.seed,
            replications: self.replications,
            gap: self.gap,
        }
    }

    fn scenario(&self) -> Result<Scenario, CliError> {
        config::load(&self.config)?.validate()
    }
}

/// Run one command and return its human-readable summary.
pub fn run(cli: &Cli) -> Result<String, CliError> {
    match &cli.command {
        Command::Design(a) => commands::design(&a.scenario()?, &a.options()).map(|r| r.1),
        Command::Simulate(a) => commands::simulate(&a.scenario()?, &a.options()).map(|r| r.1),
        Command::Compare(a) => commands::compare(&a.scenario()?, &a.options()).map(|r| r.1),
        Command::ScalarExample(a) => {
            let scalar = match &a.config {
                None => commands::default_scalar_scenario(),
                Some(path) => config::load(path)?.validate()?.scalar_scenario().ok_or_else(|| {
                    CliError::validation(
                        "participants",
                        "not a homogeneous scalar scenario (identical 1x1 participants with L_row [[1]])",
                    )
                })?,
            };
            let opts = Options {
                out: a.out.clone(),
                ..Options::default()
            };
            commands::scalar_example(&scalar, &opts).map(|r| r.1)
        }
    }
}
