//! `topokinetic`: simulate rank-based leader-following particles, solve the
//! matching nonlocal kinetic equation, verify the analytical identities that
//! connect them, and run particle-to-kinetic convergence studies.
//!
//! Exit codes: 0 success, 1 failed check or runtime error, 2 usage/config
//! error.

mod commands;
mod config;
mod output;

use clap::{Parser, Subcommand};

#[derive(Debug)]
pub enum CliError {
    /// Bad invocation or configuration → exit 2.
    Usage(String),
    /// A verification or convergence check failed → exit 1.
    Check(String),
    /// Everything else that went wrong at run time → exit 1.
    Runtime(String),
}

impl From<topokinetic::Error> for CliError {
    fn from(e: topokinetic::Error) -> Self {
        use topokinetic::Error::*;
        match e {
            Config(_) | Domain(_) | GridMismatch(_) | NonSmoothKernel(_)
            | DegenerateKernel { .. } | StepTooLarge { .. } => CliError::Usage(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

/// Seed precedence: `--seed` flag, then config file, then the
/// `TOPOKINETIC_SEED` environment variable, then 0.
pub fn resolve_seed(flag: Option<u64>, file: Option<u64>) -> Result<u64, CliError> {
    if let Some(seed) = flag {
        return Ok(seed);
    }
    if let Some(seed) = file {
        return Ok(seed);
    }
    match std::env::var("TOPOKINETIC_SEED") {
        Ok(raw) => raw
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("TOPOKINETIC_SEED = {raw:?} is not a u64"))),
        Err(_) => Ok(0),
    }
}

#[derive(Debug, Parser)]
#[command(name = "topokinetic", version, about = "Rank-based leader-following dynamics: particle simulator, kinetic solver, and analytical verification")]
struct Cli {
    /// Cap the number of worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate the N-particle leader-following dynamics.
    Simulate(commands::SimulateArgs),
    /// Solve the kinetic equation on a periodic domain.
    Solve(commands::SolveArgs),
    /// Run an analytical verification suite and emit its report.
    Verify(commands::VerifyArgs),
    /// Particle-to-kinetic convergence study over an N ladder.
    Compare(commands::CompareArgs),
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Runtime(format!("thread pool setup failed: {e}")))?;
    }
    match &cli.command {
        Command::Simulate(args) => commands::cmd_simulate(args),
        Command::Solve(args) => commands::cmd_solve(args),
        Command::Verify(args) => commands::cmd_verify(args),
        Command::Compare(args) => commands::cmd_compare(args),
    }
}

fn main() {
    let cli = Cli::parse();
    let code = match dispatch(&cli) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(CliError::Check(msg)) => {
            eprintln!("check failed: {msg}");
            1
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            1
        }
    };
    std::process::exit(code);
}
