//! Error type shared by the file formats and the CLI, with the process
//! exit-code contract: 0 success, 1 validation or format error, 2 numerical
//! abort.

use dsen_core::DsenError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Io(#[from] std::io::Error),
    /// Malformed input files, invalid configuration, failed validation.
    #[error("{0}")]
    Validation(String),
    /// Non-finite losses or gradients during training.
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical(_) => 2,
            _ => 1,
        }
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        CliError::Validation(msg.into())
    }
}

impl From<DsenError> for CliError {
    fn from(e: DsenError) -> Self {
        match e {
            DsenError::NonFiniteLoss { .. } | DsenError::NonFiniteGradient { .. } => {
                CliError::Numerical(e.to_string())
            }
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}
