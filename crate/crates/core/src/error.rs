use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("line {line}: type violation: {msg}")]
    TypeViolation { line: usize, msg: String },

    #[error("line {line}: undeclared {what}")]
    Undeclared { line: usize, what: String },

    #[error("unknown entity `{0}`")]
    UnknownEntity(String),

    #[error("unknown relation `{0}`")]
    UnknownRelation(String),

    #[error("unknown entity type `{0}`")]
    UnknownType(String),

    #[error("type mismatch: {0}")]
    TypeMismatch(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("training diverged at epoch {epoch}: {what}")]
    Diverged { epoch: usize, what: String },

    #[error("backward: {0}")]
    Backward(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("invalid path: {0}")]
    InvalidPath(String),

    #[error("layout: {0}")]
    Layout(String),

    #[error("empty path list")]
    EmptyPaths,

    #[error("config: {0}")]
    Config(String),

    #[error("generator: {0}")]
    Generator(String),

    #[error("{0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
