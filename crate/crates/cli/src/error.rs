use nlpsi::error::ErrorClass;
use thiserror::Error;

/// Process exit codes. Usage errors exit with 2 via clap.
pub const EXIT_PRECONDITION: i32 = 3;
pub const EXIT_DEGENERATE: i32 = 4;
pub const EXIT_IO: i32 = 5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] nlpsi::Error),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: String,
        source: serde_json::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) => match e.class() {
                ErrorClass::Precondition => EXIT_PRECONDITION,
                ErrorClass::Degenerate => EXIT_DEGENERATE,
                ErrorClass::Io => EXIT_IO,
            },
            CliError::Config(_) => EXIT_PRECONDITION,
            CliError::Io { .. } | CliError::Json { .. } => EXIT_IO,
        }
    }
}
