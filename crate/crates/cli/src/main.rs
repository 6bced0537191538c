//! `loads`: build label pools, select label sets, evaluate and analyse.

mod args;
mod commands;
mod run;

use std::process::ExitCode;

use clap::Parser;
use loads_core::ErrorKind;

use args::Cli;

/// Raised for flag combinations clap cannot check on its own.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<loads_core::Error>() {
            return match e.kind() {
                ErrorKind::Io => 3,
                ErrorKind::InvalidInput => 4,
                ErrorKind::Mismatch => 5,
                ErrorKind::Backend => 6,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 3;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
