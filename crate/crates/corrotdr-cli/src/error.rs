//! CLI error taxonomy with a stable exit-code contract:
//! 2 configuration, 3 I/O, 4 analysis failure.

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("analysis failed: {0}")]
    Analysis(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Analysis(_) => 4,
        }
    }

    pub fn config(msg: impl std::fmt::Display) -> Self {
        CliError::Config(msg.to_string())
    }

    pub fn io(msg: impl std::fmt::Display) -> Self {
        CliError::Io(msg.to_string())
    }

    pub fn analysis(msg: impl std::fmt::Display) -> Self {
        CliError::Analysis(msg.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
