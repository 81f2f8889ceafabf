//! `echomeasure`: measure M-mode indicators from masks, evaluate them, and
//! generate or check the supporting data and kernels.

mod args;
mod commands;
mod error;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use error::CliError;

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Measure(a) => commands::measure::run(a),
        Command::Eval(a) => commands::eval::run(a),
        Command::Synth(a) => commands::synth::run(a),
        Command::AttnCheck(a) => commands::attn_check::run(a),
        Command::Ingest(a) => commands::ingest::run(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
