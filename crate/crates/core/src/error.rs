use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    // Container and snapshot decoding.
    #[error("bad magic bytes: expected {expected:?}, found {found:?}")]
    MagicMismatch { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported format version {0}")]
    VersionUnsupported(u16),
    #[error("file truncated: need {expected} bytes, have {actual}")]
    TruncatedFile { expected: u64, actual: u64 },
    #[error("{0} trailing bytes after payload")]
    TrailingBytes(u64),
    #[error("invalid header: {0}")]
    InvalidHeader(String),
    #[error("non-finite value in {what} at row {row}")]
    NonFiniteValue { what: &'static str, row: usize },
    #[error("label {label} at row {row} is outside [0, {num_labels})")]
    LabelOutOfRange {
        row: usize,
        label: u32,
        num_labels: u32,
    },
    #[error("probability row {row} is not a distribution (sum {sum})")]
    ProbRowNotNormalized { row: usize, sum: f64 },
    #[error("vector buffer holds {actual} values, expected {expected}")]
    ShapeMismatch { expected: usize, actual: usize },

    // Slices and sidecars.
    #[error("slice rule needs a metadata sidecar but none was found")]
    MissingSidecar,
    #[error("unknown sidecar field {field:?} (row {row})")]
    UnknownField { field: String, row: usize },
    #[error("cannot parse slice rule {0:?}")]
    InvalidRule(String),
    #[error("sidecar has {sidecar} rows but the store has {store}")]
    SidecarLengthMismatch { sidecar: usize, store: usize },

    // Statistics and index.
    #[error("store is empty")]
    EmptyStore,
    #[error("subset size {subset} outside [1, {n}]")]
    SubsetOutOfRange { subset: usize, n: usize },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("k = {k} but only {available} candidates are available")]
    KTooLarge { k: usize, available: usize },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("{0}")]
    InvalidStats(String),

    // Classifier.
    #[error("neighbor list is empty")]
    EmptyNeighborList,
    #[error("temperature must be positive and finite, got {0}")]
    NonPositiveTemperature(f64),
    #[error("label spaces differ: {left} vs {right}")]
    LabelSpaceMismatch { left: usize, right: usize },
    #[error("store has no model probabilities")]
    MissingModelProbs,
    #[error("invalid backoff config: {0}")]
    InvalidConfig(String),

    // Tuning.
    #[error("k = {k} violates the 1% rule for {n_train} training rows (limit {limit}); pass the override to allow it")]
    KExceedsOnePercentRule {
        k: usize,
        n_train: usize,
        limit: usize,
    },
    #[error("empty grid: {0}")]
    EmptyGrid(&'static str),

    // Analysis.
    #[error("excluding self-matches requires the probe store to be the indexed training store")]
    ModeStoreMismatch,
    #[error("noise fraction {0} outside (0, 1)")]
    FractionOutOfRange(f64),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("collapse map covers {covered} labels but label {label} occurs")]
    PartialCollapseMap { covered: usize, label: u32 },
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),

    #[error("I/O failure on {path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::IoFailure {
            path: path.into(),
            source,
        }
    }
}
