//! Command-line driver for `qtomo` tomography campaigns.
//!
//! [`config::parse_config`] turns arguments and an optional config file into
//! a [`config::RunConfig`]; [`execute::execute`] runs it and writes the
//! result files.

pub mod config;
pub mod execute;
pub mod output;

use std::ffi::OsString;
use std::io::Write;

pub use config::{parse_config, RunConfig};
pub use execute::execute;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Argument-level failure reported by clap, including `--help`.
    #[error("{0}")]
    Clap(clap::Error),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("error: {0}")]
    Runtime(String),
}

impl CliError {
    /// 0 for help and version output, 2 for usage errors, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Clap(e) if !e.use_stderr() => 0,
            CliError::Clap(_) | CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

/// Parses, executes and reports; returns the process exit status.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let result = parse_config(argv).and_then(|cfg| execute(&cfg, &mut std::io::stdout()));
    match result {
        Ok(_) => 0,
        Err(CliError::Clap(e)) => {
            let _ = e.print();
            if e.use_stderr() {
                2
            } else {
                0
            }
        }
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "qtomo: {e}");
            e.exit_code()
        }
    }
}
