use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("value outside domain: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("transport error: {0}")]
    Transport(String),

    #[error("replay miss for model {model}, prompt {prompt_hash}, sample {sample_index}")]
    ReplayMiss {
        model: String,
        prompt_hash: String,
        sample_index: usize,
    },

    #[error("untranslatable adjectives ({language}): {}", tokens.join(", "))]
    Translation { language: String, tokens: Vec<String> },

    #[error("similarity undefined: {0}")]
    UndefinedSimilarity(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// Transport-class failures (network, remote service) as opposed to bad
    /// inputs. The CLI maps these to a distinct exit code.
    pub fn is_transport(&self) -> bool {
        matches!(self, Error::Transport(_))
    }
}
