use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error(transparent)]
    Core(#[from] modrecon_core::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    /// 1 for bad input or usage, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        use modrecon_core::Error as Core;
        match self {
            CliError::Usage(_)
            | CliError::Config(_)
            | CliError::Parse { .. }
            | CliError::Json(_) => 1,
            CliError::Core(Core::Io(_)) => 2,
            CliError::Core(_) => 1,
            CliError::Io(_) | CliError::Runtime(_) => 2,
        }
    }
}
