//! Command-line front end for the `subshuffle` accountant.
//!
//! The binary is a thin wrapper over [`run`]; everything here is also usable
//! from tests.

use std::path::PathBuf;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};

pub mod commands;
pub mod config;
pub mod output;
pub mod sweep;

use config::BoundKind;
use sweep::{Axis, LogRange};

/// Environment variable capping the worker threads.
pub const THREADS_ENV: &str = "RDP_ACCT_THREADS";

#[derive(Debug, Parser)]
#[command(name = "subshuffle", version, about = "Privacy accounting for subsampled shuffle mechanisms")]
pub struct Cli {
    /// JSON file with default values for any flag.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Directory for output files. Without it tables go to stdout.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tabulate the per-round RDP upper and lower bounds over a range of orders.
    Bound(BoundArgs),
    /// Convert T rounds of one bound to an (eps, delta) guarantee.
    Convert(ConvertArgs),
    /// Composed guarantees for several round counts.
    Compose(ComposeArgs),
    /// Our bound against the baseline pipeline along one axis.
    Compare(CompareArgs),
    /// Run private SGD on a synthetic problem.
    Simulate(SimulateArgs),
    /// Run one of the property suites (or `all`).
    Oracle(OracleArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ParamArgs {
    /// Population size.
    #[arg(long)]
    pub n: Option<u64>,
    /// Clients sampled per round.
    #[arg(long)]
    pub k: Option<u64>,
    /// Local randomizer's privacy level.
    #[arg(long)]
    pub eps0: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct SearchArgs {
    /// Largest RDP order tried by the conversion.
    #[arg(long)]
    pub lambda_max: Option<u32>,
    /// Scan every order instead of stopping once the objective keeps rising.
    #[arg(long)]
    pub exact_search: bool,
}

#[derive(Debug, Clone, Args)]
pub struct BoundArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    /// First order (default 2).
    #[arg(long)]
    pub lambda_min: Option<u32>,
    /// Last order (default 32).
    #[arg(long)]
    pub lambda_max: Option<u32>,
}

#[derive(Debug, Clone, Args)]
pub struct ConvertArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    /// Number of rounds (default 1).
    #[arg(long)]
    pub rounds: Option<u64>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// Which RDP curve to convert (default upper).
    #[arg(long, value_enum)]
    pub bound: Option<BoundKind>,
    #[command(flatten)]
    pub search: SearchArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ComposeArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    /// Comma-separated round counts.
    #[arg(long, value_delimiter = ',')]
    pub rounds: Option<Vec<u64>>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[command(flatten)]
    pub search: SearchArgs,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    /// Number of rounds.
    #[arg(long)]
    pub rounds: Option<u64>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// Swept quantity.
    #[arg(long, value_enum)]
    pub axis: Option<Axis>,
    /// Comma-separated axis values.
    #[arg(long, value_delimiter = ',', conflicts_with = "range")]
    pub values: Option<Vec<f64>>,
    /// Log-spaced axis values as `start:stop:points`.
    #[arg(long)]
    pub range: Option<LogRange>,
    #[command(flatten)]
    pub search: SearchArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Number of clients in the synthetic dataset.
    #[arg(long)]
    pub n: Option<usize>,
    /// Model dimension.
    #[arg(long)]
    pub d: Option<usize>,
    /// Radius of the parameter ball.
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long)]
    pub rounds: Option<u64>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub eps0: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// `l_inf` clipping radius (default: the problem's Lipschitz constant).
    #[arg(long)]
    pub clip: Option<f64>,
    /// Use a constant step size instead of the decaying schedule.
    #[arg(long)]
    pub constant_lr: Option<f64>,
    /// Seed of the SGD run.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Aggregate clipped gradients without the local randomizer.
    #[arg(long)]
    pub bypass_randomizer: bool,
    #[arg(long)]
    pub lambda_max: Option<u32>,
}

#[derive(Debug, Clone, Args)]
pub struct OracleArgs {
    /// sandwich, exact2rr, ternary, convexity, monotone or all.
    pub suite: String,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Result of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    /// A property check failed.
    InvariantFailure,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Ok => 0,
            Outcome::InvariantFailure => 1,
        }
    }
}

/// Worker count from `RDP_ACCT_THREADS`, if set.
pub fn thread_cap() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(anyhow!("{THREADS_ENV}: {e}")),
        Ok(s) => {
            let n: usize = s
                .trim()
                .parse()
                .with_context(|| format!("{THREADS_ENV} must be a positive integer, got `{s}`"))?;
            if n == 0 {
                return Err(anyhow!("{THREADS_ENV} must be a positive integer, got 0"));
            }
            Ok(Some(n))
        }
    }
}

/// Runs a parsed command line. Errors are usage or validation problems.
pub fn run(cli: Cli) -> Result<Outcome> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_cap()? {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().context("cannot start worker threads")?;
    pool.install(|| commands::dispatch(cli))
}
