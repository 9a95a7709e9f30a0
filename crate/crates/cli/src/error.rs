use std::path::PathBuf;

/// Failure of a CLI command. Every variant maps to a stable error code and exit status.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] dpage_core::Error),

    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    Config(String),

    #[error("{0}")]
    Contract(String),

    #[error("{0}")]
    Data(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// Machine-readable code printed as the first line of standard error.
    pub fn code(&self) -> &'static str {
        use dpage_core::Error as E;
        match self {
            CliError::Io { .. } | CliError::Core(E::Io { .. }) => "ERR_IO",
            CliError::Usage(_) => "ERR_USAGE",
            CliError::Config(_) | CliError::Core(E::Config(_)) => "ERR_CONFIG",
            CliError::Contract(_)
            | CliError::Core(E::Contract(_) | E::Dimension(_) | E::Domain(_)) => "ERR_CONTRACT",
            CliError::Data(_) | CliError::Core(E::Data(_) | E::Json(_)) => "ERR_DATA",
        }
    }

    /// 1 for I/O, 2 for usage, configuration and contract errors, 3 for bad data.
    pub fn exit_code(&self) -> i32 {
        match self.code() {
            "ERR_IO" => 1,
            "ERR_DATA" => 3,
            _ => 2,
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(format!("json error: {e}"))
    }
}
