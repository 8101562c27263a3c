use std::process::ExitCode;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid config at '{pointer}': {message}")]
    ConfigInvalid { pointer: String, message: String },
    #[error("cannot read config {path}: {source}")]
    ConfigUnreadable { path: String, source: std::io::Error },
    #[error("model build failed: {0}")]
    ModelBuildFailed(String),
    #[error("computation failed: {0}")]
    Computation(String),
    #[error("cannot write output: {0}")]
    Output(#[from] std::io::Error),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::ConfigInvalid { .. } | CliError::ConfigUnreadable { .. } => 2,
            CliError::ModelBuildFailed(_) | CliError::Computation(_) => 3,
            CliError::Output(_) | CliError::Internal(_) => 4,
        })
    }

    pub fn model(e: impl std::fmt::Display) -> Self {
        CliError::ModelBuildFailed(e.to_string())
    }

    pub fn compute(e: impl std::fmt::Display) -> Self {
        CliError::Computation(e.to_string())
    }
}
