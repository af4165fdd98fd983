use std::fmt;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use listk_core::ListkError;

mod args;
mod commands;
mod manifest;

/// Listwise top-K selection and sorting with LLM-style ranking oracles.
#[derive(Parser, Debug)]
#[command(name = "listk", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Monte Carlo runs of one operator under the perfect oracle.
    Simulate(commands::simulate::SimulateArgs),
    /// Pick the cheapest plan meeting a recall target.
    Plan(commands::plan::PlanArgs),
    /// Execute a plan over a corpus and a set of queries.
    Run(commands::run::RunArgs),
    /// Score result files against relevance labels.
    Eval(commands::eval::EvalArgs),
    /// Fit the quicksort linear coefficient from simulations.
    Fit(commands::fit::FitArgs),
    /// Print the cost-optimal pivot counts for a list size.
    Tune(commands::tune::TuneArgs),
}

/// A bad flag combination caught outside clap.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// 1 for bad input, 2 for failures while running.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(io) = cause.downcast_ref::<std::io::Error>() {
            // A closed stdout pipe is the reader's choice, not a failure.
            return if io.kind() == std::io::ErrorKind::BrokenPipe {
                0
            } else {
                1
            };
        }
        if cause.is::<UsageError>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<ListkError>() {
            if matches!(e, ListkError::Io(io) if io.kind() == std::io::ErrorKind::BrokenPipe) {
                return 0;
            }
            return if e.is_user_error() { 1 } else { 2 };
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate::run(a),
        Command::Plan(a) => commands::plan::run(a),
        Command::Run(a) => commands::run::run(a),
        Command::Eval(a) => commands::eval::run(a),
        Command::Fit(a) => commands::fit::run(a),
        Command::Tune(a) => commands::tune::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = exit_code(&e);
            if code != 0 {
                eprintln!("error: {e:#}");
            }
            ExitCode::from(code)
        }
    }
}
