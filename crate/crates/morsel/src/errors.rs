//! Crate-wide error type.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// All errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// A morphotactic tag did not parse or violated a tagset invariant.
    #[error("invalid tag `{text}`: {reason}")]
    TagParse { text: String, reason: String },

    /// A labeled segmentation violated its invariants.
    #[error("invalid segmentation for `{word}`: {reason}")]
    Segmentation { word: String, reason: String },

    /// A corpus, gazetteer, dictionary or grammar file was malformed.
    #[error("{file}:{line}: {reason}")]
    DataFormat {
        file: String,
        line: usize,
        reason: String,
    },

    /// The same word type occurred twice where types must be distinct.
    #[error("duplicate word `{word}`")]
    DuplicateWord { word: String },

    /// A fold/split request could not be satisfied.
    #[error("invalid split: {0}")]
    Split(String),

    /// Labels are too coarse for the requested view or metric.
    #[error("insufficient granularity: {need} requires {required}, got {found}")]
    Granularity {
        need: String,
        required: String,
        found: String,
    },

    /// A span or segment fell outside the word.
    #[error("span {start}..{end} out of range for word of length {len}")]
    SpanOutOfRange {
        start: usize,
        end: usize,
        len: usize,
    },

    /// A gold segment exceeded the configured maximum segment length.
    #[error(
        "word `{word}`: gold segment `{segment}` has {len} codepoints, \
         exceeding the maximum segment length {max}; raise the maximum \
         segment length or drop the instance"
    )]
    SegmentTooLong {
        word: String,
        segment: String,
        len: usize,
        max: usize,
    },

    /// A label was not part of the model's tagset.
    #[error("label `{label}` is not in the active tagset")]
    LabelNotInTagset { label: String },

    /// A configuration value was out of range.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Prediction/gold bookkeeping mismatch during evaluation.
    #[error("evaluation input mismatch: {0}")]
    EvalInput(String),

    /// The training objective became non-finite.
    #[error(
        "non-finite objective while processing word `{word}` \
         ({n_features} features active)"
    )]
    NonFiniteObjective { word: String, n_features: usize },

    /// The optimizer failed to make progress.
    #[error("optimization failed: {0}")]
    Optimization(String),

    /// The synthetic grammar could not produce the requested corpus.
    #[error("grammar too small: {0}")]
    GrammarTooSmall(String),

    /// A word was not produced by the generating grammar.
    #[error("word `{word}` was not generated by this grammar")]
    UnknownSynthWord { word: String },

    /// A model file was corrupt or had the wrong version.
    #[error("model file error: {0}")]
    ModelFormat(String),

    /// Underlying I/O failure.
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI: 1 usage, 2 data, 3 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::NonFiniteObjective { .. } | Error::Optimization(_) => 3,
            _ => 2,
        }
    }
}
