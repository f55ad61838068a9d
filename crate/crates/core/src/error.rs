use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("value out of range for `{field}`: {message}")]
    Range { field: String, message: String },

    #[error("duplicate id `{0}`")]
    Duplicate(String),

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("alignment error in block `{block}`: {message}")]
    Alignment { block: String, message: String },

    #[error("missing ids in table `{table}`: {ids:?}")]
    MissingIds { table: String, ids: Vec<String> },

    #[error("field `{0}` is absent in every training row and cannot be imputed")]
    Unimputable(String),

    #[error("rank error: {0}")]
    Rank(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("training diverged at epoch {epoch} (learning rate {learning_rate})")]
    Divergence { epoch: usize, learning_rate: f64 },

    #[error("fold error: {0}")]
    Fold(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("fold {fold}, member `{member}`: {source}")]
    Member {
        fold: usize,
        member: String,
        #[source]
        source: Box<Error>,
    },

    #[error("fold {fold}: {source}")]
    InFold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("artifact version mismatch: file has version {found}, this build reads version {expected}")]
    Version { found: u32, expected: u32 },

    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn range(field: &str, message: impl Into<String>) -> Self {
        Error::Range {
            field: field.to_string(),
            message: message.into(),
        }
    }

    pub(crate) fn config(field: &str, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.to_string(),
            message: message.into(),
        }
    }
}
