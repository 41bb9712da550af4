use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

mod config;
mod run;

use config::ScenarioConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Compute(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<gcar_core::Error> for CliError {
    fn from(e: gcar_core::Error) -> Self {
        use gcar_core::Error as E;
        match e {
            E::InvalidArgument(_) | E::RejectedConfiguration(_) | E::Parse { .. } => CliError::Config(e.to_string()),
            _ => CliError::Compute(e.to_string()),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Compute(_) | CliError::Io(_) => 3,
        }
    }
}

/// Risk measures and capital allocation rules driven by g-expectations.
#[derive(Debug, Parser)]
#[command(name = "gcar", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario file and write values.csv, axioms.txt and manifest.txt.
    Run {
        config: PathBuf,
        /// Exit with status 1 if any axiom check fails.
        #[arg(long)]
        strict: bool,
        /// Output directory.
        #[arg(long, default_value = "gcar-out")]
        out: PathBuf,
    },
    /// List drivers, allocation drivers, rules, engines and axiom ids.
    Catalog,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Catalog => {
            print!("{}", gcar_core::catalog_text());
            ExitCode::SUCCESS
        }
        Command::Run { config, strict, out } => {
            let result = ScenarioConfig::load(&config).and_then(|c| run::run(&c, &config, &out));
            match result {
                Ok(outcome) => {
                    for r in outcome.reports.iter().filter(|r| r.failed()) {
                        eprintln!("{}", r.to_record());
                    }
                    let failures = outcome.failures();
                    if failures > 0 {
                        eprintln!("{failures} of {} axiom checks failed", outcome.reports.len());
                    }
                    if strict && failures > 0 {
                        ExitCode::from(1)
                    } else {
                        ExitCode::SUCCESS
                    }
                }
                Err(e) => {
                    eprintln!("gcar: {e}");
                    ExitCode::from(e.exit_code())
                }
            }
        }
    }
}
