use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Operand shapes do not fit the operation.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// Input outside an operation's mathematical domain, e.g. `log` of a non-positive value.
    #[error("domain error: {0}")]
    Domain(String),

    /// A caller broke an API precondition.
    #[error("contract error: {0}")]
    Contract(String),

    /// Invalid model, training or decoding configuration.
    #[error("config error: {0}")]
    Config(String),

    /// Malformed input data (corpora, checkpoints, line-aligned files).
    #[error("data error: {0}")]
    Data(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
