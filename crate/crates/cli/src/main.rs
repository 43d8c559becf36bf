//! `semiknock` command-line interface.

mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;
use semiknock_core::ErrorClass;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // Usage errors exit with status 2 from clap itself.
    let cli = args::Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.class() {
                ErrorClass::Input => 2,
                ErrorClass::Model => 3,
                ErrorClass::Numeric => 4,
            })
        }
    }
}
