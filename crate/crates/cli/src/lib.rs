//! Command-line front end: argument definitions, subcommands and the exit
//! code policy. The `asc` binary is a thin wrapper around [`execute`].

pub mod args;
pub mod commands;

use std::ffi::OsString;
use std::path::PathBuf;

use asc_core::AscError;
use clap::Parser;

use crate::args::Cli;

/// Parses `argv` (program name first) and runs the command. Argument errors
/// come back as a wrapped [`clap::Error`].
pub fn execute<I, T>(argv: I) -> anyhow::Result<Vec<PathBuf>>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv)?;
    commands::run(&cli.command, &cli.out)
}

/// 2 configuration, 3 enumeration budget, 4 unreadable input, 1 anything else.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(e) = err.downcast_ref::<clap::Error>() {
        return e.exit_code() as u8;
    }
    let Some(e) = err.chain().find_map(|e| e.downcast_ref::<AscError>()) else {
        return if err.chain().any(|e| e.is::<serde_json::Error>()) { 4 } else { 1 };
    };
    match e {
        AscError::BudgetExceeded { .. } => 3,
        AscError::Parse { .. } | AscError::Json(_) => 4,
        AscError::Io(_) => 1,
        _ => 2,
    }
}
