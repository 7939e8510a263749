use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod bundled;
mod commands;

/// Exit status contract: 0 success, 1 failed invariant or invalid chain,
/// 2 usage or parse error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok = 0,
    Failed = 1,
    Usage = 2,
}

#[derive(Debug, Parser)]
#[command(name = "govledger", version, about = "Run, validate and query simulated e-government ledgers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario; writes the report and the reference node's chain.
    Run {
        /// Scenario file, or the name of one in the scenario directory or bundled set.
        #[arg(long)]
        scenario: String,
        /// Replaces the scenario seed; echoed in the report.
        #[arg(long)]
        seed: Option<u64>,
        /// Report destination; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Chain dump destination; defaults to `<out>.chain` when `--out` is given.
        #[arg(long)]
        chain: Option<PathBuf>,
        #[arg(long, env = "GOVLEDGER_SCENARIO_DIR", hide_env_values = true)]
        scenario_dir: Option<PathBuf>,
    },
    /// Validate a chain dump from genesis.
    Validate {
        #[arg(long)]
        chain: PathBuf,
    },
    /// List the records credited to an address.
    Query {
        #[arg(long)]
        chain: PathBuf,
        #[arg(long)]
        address: String,
    },
    /// Summarize a chain dump or a resolved scenario.
    Inspect {
        #[arg(long, conflicts_with = "scenario", required_unless_present = "scenario")]
        chain: Option<PathBuf>,
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long, env = "GOVLEDGER_SCENARIO_DIR", hide_env_values = true)]
        scenario_dir: Option<PathBuf>,
    },
    /// Compare two report files structurally.
    Diff { left: PathBuf, right: PathBuf },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { Status::Usage as u8 } else { 0 });
        }
    };
    let status = match cli.command {
        Command::Run { scenario, seed, out, chain, scenario_dir } => {
            commands::run(&scenario, scenario_dir.as_deref(), seed, out.as_deref(), chain.as_deref())
        }
        Command::Validate { chain } => commands::validate(&chain),
        Command::Query { chain, address } => commands::query(&chain, &address),
        Command::Inspect { chain, scenario, scenario_dir } => match (chain, scenario) {
            (Some(c), _) => commands::inspect_chain(&c),
            (None, Some(s)) => commands::inspect_scenario(&s, scenario_dir.as_deref()),
            (None, None) => Status::Usage,
        },
        Command::Diff { left, right } => commands::diff(&left, &right),
    };
    ExitCode::from(status as u8)
}
