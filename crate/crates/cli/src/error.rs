use poc_core::PocError;
use thiserror::Error;

/// CLI failures, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// The config file is unreadable, malformed or semantically invalid.
    #[error("invalid config: {0}")]
    Config(String),

    /// An input data file (results CSV, chart spec) is malformed.
    #[error("invalid input: {0}")]
    Input(String),

    /// The experiment itself failed (solver, capacity, I/O).
    #[error("run failed: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) | Self::Input(_) => 2,
            Self::Runtime(_) => 3,
        }
    }
}

impl From<PocError> for CliError {
    fn from(e: PocError) -> Self {
        Self::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Runtime(e.to_string())
    }
}
