//! `devmimic`: generate device traces, train GRU mimics, and report on them.

mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;
use devmimic::Error;

use args::Cli;

/// Exit status for each error class. Clap uses 2 for usage errors.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } => 3,
        Error::Format { .. } => 4,
        Error::Shape { .. } => 5,
        Error::Config(_) => 6,
        Error::InvalidInput(_) => 7,
        Error::NonFinite(_) => 8,
    }
}

fn kind(e: &Error) -> &'static str {
    match e {
        Error::Io { .. } => "io",
        Error::Format { .. } => "format",
        Error::Shape { .. } => "shape",
        Error::Config(_) => "config",
        Error::InvalidInput(_) => "invalid-input",
        Error::NonFinite(_) => "non-finite",
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = exit_code(&e);
            let line = serde_json::json!({
                "error": kind(&e),
                "exit_code": code,
                "message": e.to_string(),
            });
            eprintln!("{line}");
            ExitCode::from(code)
        }
    }
}
