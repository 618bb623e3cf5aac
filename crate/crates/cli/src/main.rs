//! `sdsynth`: synthesize, evaluate and inspect digital controllers.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Failure classes with their exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad configuration or arguments (exit 2).
    Config(String),
    /// Failure while computing (exit 3).
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Runtime(m) => write!(f, "runtime error: {m}"),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "sdsynth",
    version,
    about = "Statistical synthesis of digital controllers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the full synthesis loop; writes report.json and history.csv.
    Synth {
        /// Configuration file.
        config: String,
        /// Output directory, overriding `[output] dir`.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Monte Carlo safety estimate for a fixed controller; writes eval.json.
    Eval {
        /// Configuration file or plant name.
        config: String,
        #[command(flatten)]
        controller: ControllerArgs,
        /// Sample cap (default: `verify_samples`).
        #[arg(long)]
        samples: Option<u64>,
        /// Spend exactly `--samples` trajectories instead of stopping early.
        #[arg(long)]
        fixed: bool,
        /// Master seed (default: the synthesis seed).
        #[arg(long)]
        seed: Option<u64>,
        /// Integration substeps per sampling period (default: `verify_substeps`).
        #[arg(long)]
        substeps: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Spectrum of the sampled linearized closed loop and the filter verdict.
    Stability {
        config: String,
        #[command(flatten)]
        controller: ControllerArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Single closed-loop trajectory as CSV.
    Simulate {
        config: String,
        #[command(flatten)]
        controller: ControllerArgs,
        #[arg(long)]
        seed: Option<u64>,
        /// Realization index within the seeded stream.
        #[arg(long, default_value_t = 0)]
        index: u64,
        #[arg(long)]
        substeps: Option<usize>,
        #[arg(long, value_enum, default_value_t = Solver::Rk4)]
        solver: Solver,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Perturbation-bound diagnostics at one time point.
    Bounds {
        config: String,
        #[command(flatten)]
        controller: ControllerArgs,
        #[arg(long)]
        gamma: f64,
        #[arg(long)]
        t: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Solver {
    Euler,
    Rk4,
}

/// Ways to name a controller; the first one given wins, then `[controller]`.
#[derive(Debug, Clone, Args)]
struct ControllerArgs {
    /// Controller file (JSON or TOML, or a synth report) or inline JSON/TOML.
    #[arg(long)]
    controller: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    kp: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    ki: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    kd: Option<f64>,
    /// Difference-equation parameters `b0,a1,b1,…`; separate channels with `;`.
    #[arg(long, allow_hyphen_values = true)]
    params: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sdsynth: {e}");
            ExitCode::from(e.code())
        }
    }
}
