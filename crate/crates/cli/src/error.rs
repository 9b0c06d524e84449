use std::fmt;

use lmx::backend::EngineError;

/// Failure of one CLI invocation, carrying its exit status.
#[derive(Debug)]
pub enum CliError {
    /// Bad config, flag or input file.
    Config(String),
    Engine(String),
    Capability(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Engine(_) => 3,
            CliError::Capability(_) => 4,
            CliError::Io(_) => 1,
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        CliError::Config(message.into())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Engine(m) => write!(f, "engine error: {m}"),
            CliError::Capability(m) => write!(f, "capability error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Capability(_) => CliError::Capability(e.to_string()),
            EngineError::Config(_) | EngineError::InvalidRequest(_) => CliError::Config(e.to_string()),
            _ => CliError::Engine(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
