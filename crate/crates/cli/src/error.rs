use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] logitn_core::Error),

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("{0} is not empty; pass --force to overwrite")]
    OutputExists(PathBuf),

    #[error("no manifest.json in {0}; run `fit` first")]
    MissingManifest(PathBuf),

    #[error("no output directory; pass --out or set `out` in the config")]
    NoOutput,

    #[error("every (K, m) cell failed")]
    AllCellsFailed,
}

impl CliError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        CliError::Format { path: path.into(), message: message.to_string() }
    }

    /// 2 for rejected input, 1 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) => {
                if e.is_validation() {
                    2
                } else {
                    1
                }
            }
            CliError::Io { .. } | CliError::AllCellsFailed => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
