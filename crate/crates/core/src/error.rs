use std::path::PathBuf;

/// Every failure class surfaced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("contract error: {0}")]
    Contract(String),
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error("empty dataset: {0}")]
    EmptyDataset(String),
    #[error("empty sketch: {0}")]
    EmptySketch(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short stable name of the failure class, used for one-line diagnostics.
    pub fn class(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "dimension",
            Error::Numeric(_) => "numeric",
            Error::Contract(_) => "contract",
            Error::Parameter(_) => "parameter",
            Error::Format(_) => "format",
            Error::Alignment(_) => "alignment",
            Error::EmptyDataset(_) => "empty-dataset",
            Error::EmptySketch(_) => "empty-sketch",
            Error::Checkpoint(_) => "checkpoint",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
