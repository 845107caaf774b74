use std::path::PathBuf;

/// Why a command stopped. Input problems exit with 1, violated invariants with 2.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{file}: {pointer}: {message}")]
    Schema {
        file: PathBuf,
        /// JSON pointer to the offending field, `""` for the document root.
        pointer: String,
        message: String,
    },
    #[error("{file}: {source}")]
    Io {
        file: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] fkchain_core::Error),
    #[error("invariant violated: {}", .0.join("; "))]
    Invariant(Vec<String>),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Invariant(_) => 2,
            _ => 1,
        }
    }

    pub fn io(file: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            file: file.into(),
            source,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
