use thiserror::Error;

/// Errors raised while building or evaluating an RMP-tree and its policies.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch at `{path}`: expected {expected}, got {got}")]
    Dimension {
        path: String,
        expected: usize,
        got: usize,
    },
    #[error("invalid tree structure: {0}")]
    Structure(String),
    #[error("task map `{map}` is singular at the evaluation point (distance {distance:e})")]
    Singularity { map: &'static str, distance: f64 },
    #[error("non-finite {what} at `{path}`")]
    NonFinite { path: String, what: &'static str },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("node `{path}`: {source}")]
    AtNode {
        path: String,
        #[source]
        source: Box<Error>,
    },
    #[error("verification: {0}")]
    Verification(String),
    #[error("io: {0}")]
    Io(String),
}

impl Error {
    /// Attaches the node path to an error raised below the tree layer.
    pub fn at(self, path: &str) -> Error {
        match self {
            e @ (Error::AtNode { .. } | Error::Dimension { .. } | Error::NonFinite { .. }) => e,
            other => Error::AtNode {
                path: path.to_string(),
                source: Box::new(other),
            },
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
