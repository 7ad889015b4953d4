use std::process::ExitCode;

use boilgen_core::Error;

/// Failure classes with their process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad or missing configuration: exit 2.
    Config(String),
    /// The solver stopped; partial output is flagged: exit 3.
    Solver(String),
    /// Unreadable, inconsistent or mismatched data: exit 4.
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Config(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Data(_) => 4,
        })
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration: {m}"),
            CliError::Solver(m) => write!(f, "solver: {m}"),
            CliError::Data(m) => write!(f, "data: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => CliError::Config(e.to_string()),
            Error::Instability { .. } | Error::Radicand { .. } | Error::Domain(_) => {
                CliError::Solver(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(e.to_string())
    }
}
