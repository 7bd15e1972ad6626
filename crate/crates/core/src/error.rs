use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid search space: {0}")]
    Space(String),

    #[error("invalid configuration: {0}")]
    Configuration(String),

    #[error("transformation of `{param}` needs dataset information")]
    MissingDatasetInfo { param: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("meta-data schema error: {0}")]
    Schema(String),

    #[error("surrogate error: {0}")]
    Surrogate(String),

    #[error("parameter `{0}` is inactive under the reference configuration")]
    InactiveParameter(String),

    #[error("parameter `{0}` is not conditional")]
    NotConditional(String),

    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
