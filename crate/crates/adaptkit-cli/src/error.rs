use std::process::ExitCode;

/// CLI failure categories, mapped to exit codes:
/// 1 validation, 2 step failure, 3 I/O.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("validation: {0}")]
    Validation(String),
    #[error("step failed: {0}")]
    Step(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Validation(_) => ExitCode::from(1),
            CliError::Step(_) => ExitCode::from(2),
            CliError::Io(_) => ExitCode::from(3),
        }
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        CliError::Validation(msg.into())
    }

    pub fn step(msg: impl Into<String>) -> Self {
        CliError::Step(msg.into())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<adaptkit::Error> for CliError {
    fn from(e: adaptkit::Error) -> Self {
        match e {
            adaptkit::Error::Config(_) => CliError::Validation(e.to_string()),
            _ => CliError::Step(e.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
