use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes of the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("pgm parse error: {0}")]
    PgmParse(String),

    #[error("{0}")]
    IdxParse(String),

    #[error("model file error: {0}")]
    ModelFormat(String),

    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArg(String),

    #[error("non-finite gradient in {block} (learning rate too high or degenerate data)")]
    NonFiniteGradient { block: &'static str },

    #[error("no global motion: {0}")]
    NoGlobalMotion(String),

    #[error("manifest parse error: {0}")]
    Manifest(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
