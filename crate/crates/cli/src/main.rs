use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod config;
mod experiments;
mod output;

use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("io error: {0}")]
    Io(String),
}

#[derive(Parser)]
#[command(name = "mfg-newton", version, about = "Run mean field game solver experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the experiment described by a JSON configuration.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        verbose: bool,
    },
}

const EXIT_VALIDATION: u8 = 2;
const EXIT_SOLVER: u8 = 3;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Command::Run { config, verbose } = cli.command;
    let cfg = match RunConfig::load(&config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_VALIDATION);
        }
    };
    let jobs = experiments::jobs(&cfg);
    if verbose {
        eprintln!("{}: {} sub-runs on {} workers", cfg.experiment.name(), jobs.len(), cfg.workers);
    }
    let outcomes = experiments::run_all(&cfg, &jobs, verbose);
    if let Err(e) = output::write_all(&cfg, &jobs, &outcomes) {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_SOLVER);
    }
    let failures: Vec<_> = jobs
        .iter()
        .zip(&outcomes)
        .filter_map(|(j, o)| o.error.as_ref().map(|e| (j.id(), e)))
        .collect();
    for (id, e) in &failures {
        eprintln!("error: {id}: {} ({})", e, e.class());
    }
    if failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_SOLVER)
    }
}
