//! `gmac-jscc`: bound, optimization and simulation experiments from the
//! command line. Exit codes: 2 for an invalid experiment, 3 for a numerical
//! failure, 1 when output cannot be written.

mod plot;
mod run;
mod spec;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use crate::spec::{resolve, Cli, OUTPUT_DIR_ENV};

fn main() -> ExitCode {
    // clap exits with status 2 and the usage text on unknown flags
    let cli = Cli::parse();
    let (command, flags) = cli.command.split();
    let env_dir = std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from);
    let spec = match resolve(command, flags, env_dir.as_deref()) {
        Ok(spec) => spec,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match run::run(&spec) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
