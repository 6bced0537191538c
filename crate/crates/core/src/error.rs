use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}:{line}: malformed JSON: {message}", path.display())]
    Json {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("line {line}: unknown gold role `{role}`")]
    UnknownRole { line: usize, role: String },

    #[error("line {line}: duplicate example id `{id}`")]
    DuplicateId { line: usize, id: String },

    #[error("sample size {size} out of range 1..={available}")]
    SampleSize { size: usize, available: usize },

    #[error("invalid label set: {0}")]
    LabelSet(String),

    #[error("label pool: {0}")]
    Pool(String),

    #[error("template: {0}")]
    Template(String),

    #[error("prompt of {len} tokens exceeds context length {max}")]
    ContextOverflow { len: usize, max: usize },

    #[error("backend does not support {0}")]
    Unsupported(&'static str),

    #[error("token id {0} is outside the vocabulary")]
    UnknownToken(u32),

    #[error("backend: {0}")]
    Backend(String),

    #[error("model container: {0}")]
    Container(String),

    #[error("kurtosis needs at least 2 values, got {0}")]
    TooFewValues(usize),

    #[error("zero variance: kurtosis is undefined for a constant vector")]
    ZeroVariance,

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("{0}")]
    Undefined(String),

    #[error("set mismatch: {0}")]
    SetMismatch(String),

    #[error("evaluation: {0}")]
    Eval(String),

    #[error("example `{id}`: {source}")]
    AtExample {
        id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("label set [{set}], example `{id}`: {source}")]
    AtUnit {
        set: String,
        id: String,
        #[source]
        source: Box<Error>,
    },
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Io,
    InvalidInput,
    Mismatch,
    Backend,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at_example(id: &str, source: Error) -> Self {
        Error::AtExample {
            id: id.to_owned(),
            source: Box::new(source),
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io { .. } => ErrorKind::Io,
            Error::SetMismatch(_) | Error::LengthMismatch(..) => ErrorKind::Mismatch,
            Error::ContextOverflow { .. }
            | Error::Unsupported(_)
            | Error::UnknownToken(_)
            | Error::Backend(_) => ErrorKind::Backend,
            Error::AtExample { source, .. } | Error::AtUnit { source, .. } => source.kind(),
            _ => ErrorKind::InvalidInput,
        }
    }
}
