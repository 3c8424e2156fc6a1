//! Harness errors, split by how the process should exit: usage problems
//! (bad config, unknown names) exit 2, runtime failures exit 1.

use std::fmt;

#[derive(Debug)]
pub enum CliError {
    /// Misuse: malformed config, unknown dataset/model, bad arguments.
    Usage(String),
    /// Runtime failure: IO, corrupt data files, numerical divergence.
    Runtime(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(format!("io: {e}"))
    }
}

impl From<eqprop_core::Error> for CliError {
    fn from(e: eqprop_core::Error) -> Self {
        match e {
            eqprop_core::Error::Config(m) => CliError::Usage(m),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Usage(format!("json: {e}"))
    }
}
