//! Command-line front end: `fit`, `derive`, `concentration`, `simulate`, `replay`.
//!
//! Exit codes: 0 success, 1 usage error, 2 input or data error, 3 numerical failure.

use std::ffi::OsString;

use clap::Parser;

pub mod args;
pub mod commands;
pub mod error;
pub mod manifest;
pub mod output;
pub mod plot;

pub use error::CliError;

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match args::Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match commands::run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
