use std::path::PathBuf;

use ereact_core::Error as CoreError;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const MISSING_ARTIFACT: i32 = 3;
    pub const NUMERICAL: i32 = 4;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("invalid config {path}: {msg}")]
    Config { path: PathBuf, msg: String },

    #[error("{0}")]
    Usage(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("missing artifact: {0}")]
    Missing(PathBuf),

    #[error("malformed file {path}: {msg}")]
    Format { path: PathBuf, msg: String },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        CliError::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Usage(_) => exit::CONFIG,
            CliError::Io { .. } | CliError::Missing(_) | CliError::Format { .. } => exit::MISSING_ARTIFACT,
            CliError::Core(e) => match e {
                CoreError::Validation(_) | CoreError::Shape(_) | CoreError::Access(_) => exit::CONFIG,
                CoreError::Io { .. } | CoreError::Format { .. } | CoreError::MissingArtifact(_) | CoreError::Json(_) => {
                    exit::MISSING_ARTIFACT
                }
                CoreError::Numerical(_) | CoreError::Tensor(_) => exit::NUMERICAL,
            },
        }
    }
}
