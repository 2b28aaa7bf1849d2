//! Command-line runner: configuration parsing, scenario orchestration and
//! file output for distributed Nash-equilibrium seeking experiments.

pub mod config;
pub mod pipeline;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::{ConfigError, LoadedConfig, RunConfig};
pub use pipeline::{execute_run, Output, RunOutcome, Status};

#[derive(Debug, Parser)]
#[command(name = "dnes", version, about = "Distributed Nash equilibrium seeking over switching networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Overrides the seed in the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Concurrent runs in batch mode.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the equilibrium, check the network, simulate and write outputs.
    Run,
    /// Check weight balance and joint connectivity of the schedule.
    CheckGraph,
    /// Solve the equilibrium with the centralized oracle.
    SolveNe,
    /// Evaluate the step-size bounds.
    Bounds,
    /// Run several configurations, each in its own output subdirectory.
    Batch {
        /// Configuration files (in addition to --config).
        configs: Vec<PathBuf>,
    },
}

/// Executes a parsed command line, printing results to stdout and errors to
/// stderr, and returns the process exit code.
pub fn run_cli(cli: Cli) -> i32 {
    match dispatch(&cli) {
        Ok((output, status)) => {
            print!("{}", output.render());
            status.code()
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            Status::Error.code()
        }
    }
}

fn dispatch(cli: &Cli) -> anyhow::Result<(Output, Status)> {
    if let Command::Batch { configs } = &cli.command {
        let mut all: Vec<PathBuf> = cli.config.iter().cloned().collect();
        all.extend(configs.iter().cloned());
        if all.is_empty() {
            anyhow::bail!("batch needs at least one configuration file");
        }
        let (output, status, entries) = pipeline::cmd_batch(&all, cli.seed, &cli.out, cli.jobs)?;
        for e in entries.iter().filter(|e| !e.message.is_empty()) {
            eprintln!("{}: {}", e.config.display(), e.message);
        }
        return Ok((output, status));
    }
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| anyhow::anyhow!("--config PATH is required"))?;
    let cfg = LoadedConfig::from_path(path)?;
    match cli.command {
        Command::Run => pipeline::cmd_run(&cfg, cli.seed, &cli.out),
        Command::CheckGraph => pipeline::cmd_check_graph(&cfg),
        Command::SolveNe => pipeline::cmd_solve_ne(&cfg, cli.seed),
        Command::Bounds => pipeline::cmd_bounds(&cfg),
        Command::Batch { .. } => unreachable!("handled above"),
    }
}
