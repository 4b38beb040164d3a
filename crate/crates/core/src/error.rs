use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// A solver step produced a density value below the positivity tolerance.
    #[error("positivity violated: minimum density {min_value:e} at node {node}")]
    SchemeViolation { min_value: f64, node: usize },

    #[error("singular linear system (zero pivot at row {row})")]
    SingularSystem { row: usize },

    #[error("mass drift {drift:e} exceeds tolerance")]
    MassDrift { drift: f64 },

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("controller failure: {0}")]
    Controller(String),

    #[error("empty ensemble")]
    EmptyEnsemble,

    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },

    #[error("{0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<std::path::PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
