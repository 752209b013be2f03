//! `gaspin`: run, compare and check the trust-region and G-ASPIN solvers
//! from JSON experiment files.
//!
//! Exit codes: 0 success, 1 failed check or unconverged run, 2 configuration
//! error, 3 infeasible start.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "gaspin", version, about = "Trust-region and G-ASPIN experiment harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one solver and write trace.csv, summary.json and local_reports.jsonl.
    Run(Options),
    /// Run every listed variant from the same start and compare final iterates.
    Compare(Options),
    /// Finite-difference and decomposition consistency suite.
    Check(Options),
    /// Write the dense Schwarz operator C at the start point as CSV.
    DumpSchwarz(Options),
}

#[derive(clap::Args, Debug, Clone)]
pub struct Options {
    /// Experiment file (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads for the subdomain solves (0 = all cores).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Overrides the `seed` of the experiment file.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Infeasible(String),
    Failed(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Failed(_) => 1,
            CliError::Config(_) => 2,
            CliError::Infeasible(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "configuration error: {msg}"),
            CliError::Infeasible(msg) => write!(f, "infeasible start: {msg}"),
            CliError::Failed(msg) => write!(f, "{msg}"),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Failed(format!("i/o error: {err}"))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(o) => commands::run(o),
        Command::Compare(o) => commands::compare(o),
        Command::Check(o) => commands::check(o),
        Command::DumpSchwarz(o) => commands::dump_schwarz(o),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
