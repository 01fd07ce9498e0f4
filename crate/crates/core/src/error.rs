use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Crate-wide error type. Variants are grouped by how callers recover:
/// `MissingInput` and `Numerics` map to dedicated CLI exit codes.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("ingest error at line {line}: {msg}")]
    Ingest { line: usize, msg: String },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("numerical abort in {phase}: {msg}")]
    Numerics { phase: String, msg: String },

    #[error("malformed artifact {path}: {msg}")]
    Artifact { path: PathBuf, msg: String },

    #[error("missing input: {0}")]
    MissingInput(PathBuf),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn ingest(line: usize, msg: impl Into<String>) -> Self {
        Error::Ingest {
            line,
            msg: msg.into(),
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn numerics(phase: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Numerics {
            phase: phase.into(),
            msg: msg.into(),
        }
    }

    pub fn artifact(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Artifact {
            path: path.into(),
            msg: msg.into(),
        }
    }
}
