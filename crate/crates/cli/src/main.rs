//! `ringwalk`: exact analysis and simulation of workers circulating without
//! passing on a ring of bins.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::output::OUT_DIR_ENV;

#[derive(Debug, Parser)]
#[command(name = "ringwalk", version, about, propagate_version = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    #[command(flatten)]
    io: IoArgs,
}

#[derive(Debug, Args)]
struct IoArgs {
    /// Output format.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,

    /// Write the artifact here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Base directory for relative --out paths and for default file names.
    #[arg(long, global = true, env = OUT_DIR_ENV)]
    out_dir: Option<PathBuf>,

    /// Largest state space to materialize.
    #[arg(long, global = true, default_value_t = ringwalk::state_space::DEFAULT_STATE_CAP)]
    cap: u128,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, Args)]
struct Dims {
    /// Number of workers.
    #[arg(long)]
    k: usize,
    /// Number of bins.
    #[arg(long)]
    n: usize,
}

#[derive(Debug, Clone, Copy, Args)]
struct Rate {
    /// Per-bin success probability.
    #[arg(long, allow_hyphen_values = true)]
    s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Closed,
    Power,
    Both,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// List the Markov states in canonical order.
    States {
        #[command(flatten)]
        dims: Dims,
    },
    /// Full transition matrix.
    Matrix {
        #[command(flatten)]
        dims: Dims,
        #[command(flatten)]
        rate: Rate,
    },
    /// Stationary distribution by closed form, power iteration, or both.
    Stationary {
        #[command(flatten)]
        dims: Dims,
        #[command(flatten)]
        rate: Rate,
        #[arg(long, value_enum, default_value_t = Method::Closed)]
        method: Method,
        /// Power iteration stopping tolerance on the sup-norm step.
        #[arg(long, default_value_t = ringwalk::markov::POWER_TOL, allow_hyphen_values = true)]
        power_tol: f64,
        #[arg(long, default_value_t = ringwalk::markov::POWER_MAX_ITER)]
        max_iter: usize,
    },
    /// Long-run blockage fraction of a worker.
    Blockage {
        #[command(flatten)]
        dims: Dims,
        #[command(flatten)]
        rate: Rate,
    },
    /// Monte Carlo simulation of the physical dynamics.
    Simulate {
        #[command(flatten)]
        dims: Dims,
        #[command(flatten)]
        rate: Rate,
        /// Recorded steps per replica.
        #[arg(long, default_value_t = 1_000_000)]
        steps: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = ringwalk::simulator::DEFAULT_BURNIN)]
        burnin: u64,
        /// Maximum failures per worker per step (unbounded if omitted).
        #[arg(long)]
        f_cap: Option<u64>,
        #[arg(long, default_value_t = 1)]
        replicas: u64,
        /// Initial configuration such as `1,2,4`; random placement if omitted.
        #[arg(long)]
        start: Option<String>,
        /// Also write a per-step CSV trace to this path.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Exit 2 if the statistics fall outside the auto-scaled tolerances.
        #[arg(long)]
        check: bool,
    },
    /// Run every invariant suite on one instance.
    Verify {
        #[command(flatten)]
        dims: Dims,
        #[command(flatten)]
        rate: Rate,
        #[arg(long, default_value_t = 1e-12, allow_hyphen_values = true)]
        tol_exact: f64,
        #[arg(long, default_value_t = 1e-10, allow_hyphen_values = true)]
        tol_eigen: f64,
    },
    /// Rearrangement digraph on configurations.
    Digraph {
        #[command(flatten)]
        dims: Dims,
        /// Emit Graphviz DOT instead of JSON or CSV.
        #[arg(long)]
        dot: bool,
    },
}

/// Ways a command can fail, each with its own exit status.
#[derive(Debug)]
enum Failure {
    Domain(String),
    Verification(String),
    Cap(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Domain(_) => 1,
            Failure::Verification(_) => 2,
            Failure::Cap(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Domain(m) | Failure::Verification(m) | Failure::Cap(m) => m,
        }
    }
}

impl From<ringwalk::Error> for Failure {
    fn from(e: ringwalk::Error) -> Self {
        match e {
            ringwalk::Error::ResourceCap { .. } => Failure::Cap(e.to_string()),
            other => Failure::Domain(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Domain(format!("i/o error: {e}"))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match commands::dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("ringwalk: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
