//! Command-line surface.

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

/// Environment variable overriding the output directory when `--out` is absent.
pub const OUT_DIR_ENV: &str = "GALERKIN_OUT_DIR";

#[derive(Debug, Clone, Parser)]
#[command(name = "galerkin-lab", version, about = "Simulation and verification suite for the fast-slow Galerkin system")]
pub struct Cli {
    /// JSON run configuration; defaults apply to every omitted key.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides `sim.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory, overriding the configuration and the environment.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SimMode {
    Full,
    Fast,
    Effective,
    Reference,
}

#[derive(Debug, Clone, PartialEq, Subcommand)]
pub enum Command {
    /// Eigenvalues, budgets and admissible boundary exponents.
    Spectrum,
    /// Triad coefficients, the stirring family and field identity checks.
    DriftTable,
    /// Averaged coefficients `q(r, 1)` along a uniform ratio grid.
    Qtable {
        #[arg(long)]
        ratios: Option<usize>,
    },
    /// One trajectory of the chosen dynamics.
    Simulate {
        #[arg(long, value_enum, default_value = "full")]
        mode: SimMode,
    },
    /// Stationary identities, exponential bounds and fast-flow conservation.
    Check,
    /// Full-system versus effective-diffusion sweep over a descending eps grid.
    Inviscid {
        #[arg(long, value_delimiter = ',')]
        eps: Option<Vec<f64>>,
    },
    /// Condensation bounds against an effective-diffusion run.
    Condensation,
    /// Fast-flow ensemble relaxing towards `q(u0, v0)`.
    Equilibrate {
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long = "t-grid", value_delimiter = ',')]
        t_grid: Option<Vec<f64>>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::DriftTable => "drift-table",
            Command::Qtable { .. } => "qtable",
            Command::Simulate { .. } => "simulate",
            Command::Check => "check",
            Command::Inviscid { .. } => "inviscid",
            Command::Condensation => "condensation",
            Command::Equilibrate { .. } => "equilibrate",
        }
    }
}
