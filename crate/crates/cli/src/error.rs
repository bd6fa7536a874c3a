use std::process::ExitCode;

use rfib_core::Error as CoreError;

/// Failure classes, each with its own process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad config, flags or input data. Exit 2.
    #[error("config error: {0}")]
    Config(String),
    /// Training or evaluation hit a numeric failure. Exit 3.
    #[error("numeric failure: {0}")]
    Numeric(String),
    /// Anything else (I/O while writing results). Exit 1.
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Other(_) => 1,
        })
    }

    /// Classifies a core error raised while computing.
    pub fn compute(context: &str, e: CoreError) -> Self {
        let msg = format!("{context}: {e}");
        match e {
            CoreError::InvalidArgument(_)
            | CoreError::InvalidData(_)
            | CoreError::EmptyGroup(_)
            | CoreError::Csv(_)
            | CoreError::Image(_)
            | CoreError::Checkpoint(_) => {
                CliError::Config(msg)
            }
            CoreError::Io(_) => CliError::Other(msg),
            _ => CliError::Numeric(msg),
        }
    }

    pub fn io(context: &str, e: std::io::Error) -> Self {
        CliError::Other(format!("{context}: {e}"))
    }
}
