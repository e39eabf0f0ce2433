use std::fmt;
use std::path::PathBuf;

use crate::types::Scale;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// A single problem found while validating an input file.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Parse {
        line: usize,
        message: String,
    },
    Range {
        line: usize,
        field: String,
        message: String,
    },
    DuplicateKey {
        line: usize,
        key: String,
    },
    DanglingReference {
        key: String,
    },
    Invalid {
        line: usize,
        message: String,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Parse { line, message } => write!(f, "line {line}: parse error: {message}"),
            Violation::Range { line, field, message } => write!(f, "line {line}: {field} out of range: {message}"),
            Violation::DuplicateKey { line, key } => write!(f, "line {line}: duplicate key {key}"),
            Violation::DanglingReference { key } => {
                write!(f, "no clinical record for {key}")
            }
            Violation::Invalid { line, message } => write!(f, "line {line}: {message}"),
        }
    }
}

fn join_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| format!("  {v}"))
        .collect::<Vec<_>>()
        .join("\n")
}

fn join_scales(scales: &[Scale]) -> String {
    scales.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("no embedding for anchor text {0:?}")]
    MissingEmbedding(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("axis {axis} is degenerate (norm {norm:e})")]
    DegenerateAxis { axis: String, norm: f64 },
    #[error("invalid anchor set {axis}: {reason}")]
    InvalidAnchors { axis: String, reason: String },
    #[error("need at least {needed} distinct points with non-zero spread, found {found}")]
    InsufficientPoints { needed: usize, found: usize },
    #[error("model mismatch: expected {expected}, found {found}")]
    ModelMismatch { expected: String, found: String },
    #[error("response has no units after segmentation")]
    EmptyAfterSegmentation,
    #[error("need at least 2 units for an odd/even split, found {0}")]
    TooFewUnits(usize),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("series has zero variance")]
    ZeroVariance,
    #[error("series lengths differ ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least {needed} observations, found {found}")]
    TooFewObservations { needed: usize, found: usize },
    #[error("reliability {0} outside (0, 1]")]
    InvalidReliability(f64),
    #[error("projection reliability is undefined")]
    UndefinedReliability,
    #[error("series is empty")]
    EmptySeries,
    #[error("sentiment lexicon missing or empty: {0}")]
    LexiconMissing(String),
    #[error("lexicon checksum mismatch for {path}: expected {expected}, found {found}")]
    LexiconChecksum {
        path: String,
        expected: String,
        found: String,
    },
    #[error("embedding cache miss for text hash {hash}")]
    CacheMiss { hash: String },
    #[error("cache already holds a different vector for hash {hash}")]
    CacheConflict { hash: String },
    #[error("embedding service unreachable: {0}")]
    ServiceUnreachable(String),
    #[error("embedding service returned HTTP {status}: {message}")]
    Service { status: u16, message: String },
    #[error("invalid data in {}:\n{}", path.display(), join_violations(violations))]
    InvalidData { path: PathBuf, violations: Vec<Violation> },
    #[error("scale reliabilities missing from config: {}", join_scales(.0))]
    MissingReliabilities(Vec<Scale>),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad inputs or configuration rather than the
    /// runtime environment.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidAnchors { .. }
                | Error::InvalidInput(_)
                | Error::InvalidData { .. }
                | Error::MissingReliabilities(_)
                | Error::InvalidConfig(_)
                | Error::InvalidReliability(_)
                | Error::ModelMismatch { .. }
                | Error::LexiconChecksum { .. }
                | Error::Json(_)
        )
    }
}
