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

    #[error("{path}, row {row}: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("duplicate response for learner `{learner}` on item `{item}`")]
    DuplicatePair { learner: String, item: String },

    #[error("invalid score {score} (expected 0 or 1)")]
    InvalidScore { score: i64 },

    #[error("q-matrix row for item `{item}` has no required knowledge concept")]
    EmptyQRow { item: String },

    #[error("q-matrix mismatch: {0}")]
    QMatrixMismatch(String),

    #[error("dimension mismatch: expected {expected}, got {actual} ({context})")]
    Dimension {
        expected: usize,
        actual: usize,
        context: &'static str,
    },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("infeasible lambda {lambda}: feasible interval is ({lo:?}, {hi:?}]")]
    InfeasibleLambda { lambda: f64, lo: f64, hi: f64 },

    #[error("infeasible bounds: lambda lower bound {lo} is not below upper bound {hi}")]
    InfeasibleBounds { lo: f64, hi: f64 },

    #[error("no responses for learner")]
    NoEvidence,

    #[error("no known items among responses; unknown: {}", .unknown.join(", "))]
    AllItemsUnknown { unknown: Vec<String> },

    #[error("non-finite {what} at epoch {epoch}")]
    NonFinite { what: &'static str, epoch: usize },

    #[error("non-finite gradient in layer {layer}")]
    NonFiniteGradient { layer: usize },

    #[error("gradient tape does not match the layer stack")]
    StaleTape,

    #[error("index {index} out of range for {what} (len {len})")]
    OutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("no duplicate response rows; run augment_shadow first")]
    NoDuplicateRows,

    #[error("no item has a comparable learner pair for DOC")]
    NoComparablePairs,

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("unsupported model file format version {0}")]
    FormatVersion(u32),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
