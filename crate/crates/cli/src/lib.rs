//! The `vte` command: one subcommand per pipeline stage.
//!
//! Exit status is 0 on success, 2 for usage errors (unknown or invalid
//! flags) and 1 for runtime failures; a one-line diagnostic goes to stderr.

mod args;
mod commands;
mod config;
mod error;

use std::ffi::OsString;

use clap::Parser;

pub use args::Cli;
pub use error::{CliError, CliResult};

/// Parses `argv` (program name first), runs the command and returns the
/// process exit status.
pub fn run<I, T>(argv: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let argv = match config::expand_args(argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("vte: {e}");
            return e.exit_code();
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();
    match commands::dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("vte: {e}");
            e.exit_code()
        }
    }
}
