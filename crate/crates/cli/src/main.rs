//! `gpsobol`: fit Gaussian-process metamodels and compute first-order Sobol
//! indices from them.

mod commands;
mod config;
mod csvio;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Common;
use crate::error::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "gpsobol", version, about = "Sobol indices of Gaussian-process metamodels")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed for every random draw of the run.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    /// Exit with success even when quadrature or simulation did not converge.
    #[arg(long, global = true)]
    allow_nonconverged: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a Latin hypercube design, optionally with test-function responses.
    Lhs,
    /// Fit a model to a design CSV.
    Fit,
    /// Compute predictor-only and global-model indices from a fitted model.
    Sobol,
    /// Run the benchmark studies.
    Bench,
}

fn run(cli: &Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::schema("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::schema(format!("thread pool: {e}")))?;
    }
    let common = Common { seed: cli.seed, out: cli.out.clone(), allow_nonconverged: cli.allow_nonconverged };
    let config = cli.config.as_deref();
    match cli.command {
        Command::Lhs => commands::lhs(config, &common),
        Command::Fit => commands::fit_cmd(config, &common),
        Command::Sobol => commands::sobol(config, &common),
        Command::Bench => commands::bench(config, &common),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("GPSOBOL_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::schema(e.to_string().trim_end().to_string());
            eprintln!("{}", err.to_json());
            return ExitCode::from(err.exit_code() as u8);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{}", err.to_json());
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
