//! Experiment runner behind the `chainsim` binary.

pub mod commands;
pub mod config;
pub mod report;

use serde::Serialize;

/// Failures that end a command, with their process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or configuration: exit 2, nothing written.
    Config(String),
    /// An engine could not produce a trustworthy number: exit 3.
    Numerical(String),
    /// Output could not be written: exit 1.
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 1,
        }
    }

    /// One-line JSON for stderr.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Payload<'a> {
            error: &'a str,
            message: &'a str,
            exit_code: i32,
        }
        let (kind, message) = match self {
            CliError::Config(m) => ("config", m),
            CliError::Numerical(m) => ("numerical", m),
            CliError::Io(m) => ("io", m),
        };
        serde_json::to_string(&Payload { error: kind, message, exit_code: self.exit_code() })
            .expect("error payload serializes")
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) | CliError::Numerical(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

impl From<chainsim_core::Error> for CliError {
    fn from(e: chainsim_core::Error) -> Self {
        use chainsim_core::Error as E;
        match e {
            E::Config(_) | E::Domain(_) => CliError::Config(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}
