use std::path::PathBuf;

/// Errors produced by the mixture estimator, the collapse diagnostics and the
/// simulator.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    /// A mixture component has no (or negative) accumulated mass.
    #[error("degenerate component {index}: accumulated weight {mass}")]
    DegenerateComponent { index: usize, mass: f64 },

    /// The data does not span enough directions for the requested projection.
    #[error("degenerate rank: {0}")]
    DegenerateRank(String),

    /// Malformed input file; `offset` is the byte offset of the offending token.
    #[error("{path}: parse error at byte {offset}: {message}")]
    Parse {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
