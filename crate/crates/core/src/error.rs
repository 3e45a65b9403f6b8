use std::path::PathBuf;

use thiserror::Error;

/// Key of one token in the corpus: (transcript, utterance, token).
pub type TokenKey = (String, usize, usize);

fn key_str(key: &TokenKey) -> String {
    format!("({}, {}, {})", key.0, key.1, key.2)
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: malformed tier line (expected `*CODE:`): {text:?}")]
    MalformedTier { path: String, line: usize, text: String },

    #[error("{path}: no participant (*PAR:) tiers found")]
    EmptyTranscript { path: String },

    #[error("label at {} has ciu=1 but word=0", key_str(.key))]
    LabelConstraintViolation { key: TokenKey },

    #[error("duplicate key {}", key_str(.key))]
    DuplicateKey { key: TokenKey },

    #[error("line {line}: {column} must be 0 or 1, got {value:?}")]
    NonBinaryFlag {
        line: usize,
        column: &'static str,
        value: String,
    },

    #[error("token {} has no label row", key_str(.key))]
    MissingLabel { key: TokenKey },

    #[error("label row {} does not match any token", key_str(.key))]
    OrphanLabel { key: TokenKey },

    #[error("surface mismatch at {}: token {token:?} vs label {label:?}", key_str(.key))]
    SurfaceMismatch {
        key: TokenKey,
        token: String,
        label: String,
    },

    #[error("{path}: line {line}: {message}")]
    BadTable {
        path: String,
        line: usize,
        message: String,
    },

    #[error("task {task} has no instances")]
    EmptyTask { task: String },

    #[error("training targets contain a single class")]
    SingleClassTraining,

    #[error("evaluation needs both classes present")]
    SingleClassEval,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("grouped bootstrap needs at least 2 groups, got {0}")]
    TooFewGroups(usize),

    #[error("split needs at least 2 transcripts, got {0}")]
    TooFewTranscripts(usize),

    #[error("split has an empty {0} side")]
    EmptySplitSide(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("test items differ between runs: {0}")]
    TestItemMismatch(String),

    #[error("grid cell {cell} failed: {source}")]
    Cell {
        cell: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Input or configuration problems, as opposed to runtime failures.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Io { .. } | Error::ModelFormat(_) => false,
            Error::Cell { source, .. } => source.is_validation(),
            _ => true,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
