use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Format {
        path: String,
        line: usize,
        message: String,
    },

    #[error("no token survived filtering; vocabulary is empty")]
    EmptyVocabulary,

    #[error("document {0} has no in-vocabulary tokens")]
    EmptySignal(String),

    #[error("missing topic embedding for document {doc}, sentence {sentence}")]
    MissingEmbedding { doc: String, sentence: usize },

    #[error("signal has zero total mass")]
    ZeroMass,

    #[error("invalid scale {0}")]
    InvalidScale(f64),

    #[error("unsupported derivative order {0} (expected 1..=3)")]
    UnsupportedOrder(u32),

    #[error("explicit diffusion step {0} exceeds the stability bound 0.25")]
    UnstableStep(f64),

    #[error("linear system is singular: {0}")]
    SingularSystem(String),

    #[error("invalid scale range: {0}")]
    InvalidRange(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("class {0} has fewer than two documents")]
    DegenerateClass(String),

    #[error("no preference pairs in the judgments")]
    NoPreferencePairs,

    #[error("every averaged margin is non-positive")]
    NoPositiveMargin,

    #[error("no relevance judgments for query {0}")]
    MissingJudgments(String),

    #[error("label mismatch: {0}")]
    LabelMismatch(String),

    #[error("document has {0} sentences, at least 3 are required")]
    TooShort(usize),

    #[error("unknown document id {0}")]
    UnknownDocument(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl AsRef<std::path::Path>, line: usize, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.as_ref().display().to_string(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn param(message: impl Into<String>) -> Self {
        Error::InvalidParameter(message.into())
    }
}
