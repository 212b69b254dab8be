//! Command-line front end: dataset simulation, model fitting, selection
//! scans, classification, bootstrap standard errors, and baseline
//! diagnostics, with reproducible seeded runs and a manifest per invocation.

mod commands;
mod io;

use std::process::ExitCode;

use clap::Parser;

use commands::Cli;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
