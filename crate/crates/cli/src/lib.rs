//! Command implementations behind the `cenn-forge` binary.
//!
//! Every command writes into a fresh `run-NNN` directory under the output
//! root, so earlier results are never touched.

pub mod bridge;
pub mod checks;
pub mod commands;
pub mod config;
pub mod report;

use std::fmt;
use std::path::PathBuf;

pub use commands::{cmd_compile, cmd_run, cmd_sweep, cmd_verify, SweepAxis};
pub use config::RunConfig;

#[derive(Debug)]
pub enum CliError {
    Core(cenn_forge::Error),
    Usage(String),
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    /// Tag printed in front of the message, e.g. `error[parse]`.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Usage(_) => "usage",
            CliError::Io { .. } => "io",
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // one line, always
        let text = match self {
            CliError::Core(e) => e.to_string(),
            CliError::Usage(m) => m.clone(),
            CliError::Io { path, source } => format!("{}: {source}", path.display()),
        };
        f.write_str(&text.replace('\n', " "))
    }
}

impl std::error::Error for CliError {}

impl From<cenn_forge::Error> for CliError {
    fn from(e: cenn_forge::Error) -> Self {
        CliError::Core(e)
    }
}

pub type CliResult<T> = Result<T, CliError>;
