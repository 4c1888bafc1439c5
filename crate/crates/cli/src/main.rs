use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use guessd_cli::{commands, exit_code, load, Problem};

/// Randomized guesswork under a distortion constraint.
#[derive(Debug, Parser)]
#[command(name = "guessd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Problem configuration (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory for the CSV table and summary.json.
    #[arg(long, global = true, value_name = "DIR", default_value = "guessd-out")]
    out: PathBuf,

    /// Seed for solver restarts and simulation; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Simulation worker threads; overrides the config.
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Blocklengths for the exact oracle.
    #[arg(long, global = true, value_delimiter = ',', value_name = "N,N,...")]
    n_list: Option<Vec<usize>>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// One-shot moments, tilted strategy, quantizer and bounds.
    Oneshot,
    /// Asymptotic i.i.d. and synchronous exponents.
    Exponent,
    /// Rate-distortion and mismatched rate-distortion functions.
    Rd,
    /// Exact finite-blocklength rates against the asymptotic exponent.
    Oracle,
    /// Monte-Carlo guessing.
    Simulate,
}

const DEFAULT_N_LIST: [usize; 4] = [2, 4, 6, 8];

fn run(cli: &Cli) -> Result<u8> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| guessd_cli::ConfigError("--config PATH is required".into()))?;
    let mut problem: Problem = load(path)?;
    if let Some(seed) = cli.seed {
        problem.controls.seed = seed;
        problem.sim.master_seed = seed;
    }
    if let Some(w) = cli.workers {
        problem.sim.workers = w;
    }
    match cli.command {
        Command::Oneshot => commands::oneshot(&problem, &cli.out),
        Command::Exponent => commands::exponent(&problem, &cli.out),
        Command::Rd => commands::rd(&problem, &cli.out),
        Command::Oracle => {
            let n_list = cli.n_list.clone().unwrap_or_else(|| DEFAULT_N_LIST.to_vec());
            commands::oracle(&problem, &n_list, &cli.out)
        }
        Command::Simulate => commands::simulate(&problem, &cli.out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
