//! `rie`: clean sample covariances, simulate data, run verification suites
//! and emit spectral densities.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage or input error.

mod args;
mod commands;
mod verify;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return ExitCode::from(err.exit_code().clamp(0, 255) as u8);
        }
    };
    let result = match &cli.command {
        Command::Clean(args) => commands::clean(args).map(|_| true),
        Command::Simulate(args) => commands::simulate(args).map(|_| true),
        Command::Spectrum(args) => commands::spectrum(args).map(|_| true),
        Command::Verify(args) => verify::run(args),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
    }
}
