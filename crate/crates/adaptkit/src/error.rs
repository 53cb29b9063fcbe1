use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates a precondition.
    #[error("config error: {0}")]
    Config(String),

    /// Input data violates an operation's contract.
    #[error("data error: {0}")]
    Data(String),

    /// A model/tensor-level contract was violated.
    #[error("model error: {0}")]
    Model(String),

    /// Training diverged (NaN/inf loss).
    #[error("training diverged at step {step}: {detail}")]
    Diverged { step: usize, detail: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
    pub fn model(msg: impl Into<String>) -> Self {
        Error::Model(msg.into())
    }
}
