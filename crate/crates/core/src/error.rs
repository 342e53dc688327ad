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

    #[error("{context}: parse error: {message}")]
    Parse { context: String, message: String },

    #[error("duplicate fine label {label:?} (under {first:?} and {second:?})")]
    DuplicateFineLabel { label: String, first: String, second: String },

    #[error("empty coarse cluster {0:?}")]
    EmptyCoarseCluster(String),

    #[error("label {0:?} is used as both a coarse and a fine label")]
    LabelCollision(String),

    #[error("empty label name in {0}")]
    EmptyLabel(String),

    #[error("unknown {granularity} label {name:?}")]
    UnknownLabel { granularity: &'static str, name: String },

    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("coarse label collision: both utterances map to {0:?}")]
    CoarseCollision(String),

    #[error("synthesis exhausted: {0}")]
    SynthesisExhausted(String),

    #[error("token index {index} out of range for vocabulary of size {vocab_size}")]
    OutOfVocab { index: usize, vocab_size: usize },

    #[error("encoder adapter {0:?} is unavailable; install or register an implementation under that name")]
    AdapterUnavailable(String),

    #[error("adapter contract violated: {0}")]
    AdapterContract(String),

    #[error("all positions are masked")]
    AllMasked,

    #[error("shape error: {0}")]
    Shape(String),

    #[error("label index {index} out of range for {classes} classes")]
    LabelOutOfRange { index: usize, classes: usize },

    #[error("gold position {0} falls on a masked token")]
    GoldOnMask(usize),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("non-finite loss in batch {batch}: {breakdown}")]
    NonFiniteLoss { batch: usize, breakdown: String },

    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("vocabulary hash mismatch: checkpoint records {stored}, vocabulary hashes to {computed}")]
    VocabHashMismatch { stored: String, computed: String },

    #[error("taxonomy mismatch: {0}")]
    TaxonomyMismatch(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn parse(context: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse { context: context.into(), message: message.to_string() }
    }
}
