//! File formats, reports and the `lasalle` command-line frontend for
//! [`lasalle_core`].
//!
//! * [`system_file`]: the JSON system definition.
//! * [`config`]: run settings from flags and an optional `--config` file.
//! * [`report`]: JSON report bodies and CSV plot data.
//! * [`output`]: atomic file writes.
//! * [`commands`]: one function per subcommand.

// `!(x > 0.0)` style checks reject NaN on purpose
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;
pub mod report;
pub mod system_file;

use std::fmt;

/// Process exit status. The numeric values are part of the interface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Status {
    Ok = 0,
    InputError = 2,
    Divergence = 3,
    NotConverged = 4,
    DescentViolation = 5,
    HypothesisFailure = 6,
    Inconclusive = 7,
}

impl Status {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug)]
pub struct CliError {
    pub status: Status,
    pub message: String,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        CliError {
            status: Status::InputError,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<lasalle_core::Error> for CliError {
    fn from(e: lasalle_core::Error) -> Self {
        let status = match e {
            lasalle_core::Error::Unbounded { .. } => Status::Divergence,
            _ => Status::InputError,
        };
        CliError {
            status,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::input(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
