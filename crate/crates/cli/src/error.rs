use std::path::PathBuf;

use thiserror::Error;

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] stgraph::Error),
}

impl CliError {
    pub fn config(field: &str, msg: impl std::fmt::Display) -> Self {
        CliError::Config(format!("{field}: {msg}"))
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn exit_code(&self) -> i32 {
        use stgraph::Error as E;
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Io { .. } => EXIT_IO,
            CliError::Core(e) => match e {
                E::Io { .. } | E::Parse { .. } | E::RaggedRows { .. } => EXIT_IO,
                E::NotConverged { .. } | E::NotPositiveDefinite { .. } | E::CacheDrift { .. } => EXIT_NUMERIC,
                _ => EXIT_CONFIG,
            },
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
