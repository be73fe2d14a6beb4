//! Error type shared by every module of the crate.

use std::path::PathBuf;

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    // data
    #[error("file not found: {0}")]
    MissingFile(PathBuf),
    #[error("parse error at row {row}, column {col}: {reason}")]
    ParseError { row: usize, col: usize, reason: String },
    #[error("non-finite value at row {row}, column {col}")]
    NonFiniteValue { row: usize, col: usize },
    #[error("dataset has no data rows")]
    EmptyDataset,
    #[error("split leaves segment `{segment}` empty (series length {length})")]
    SegmentTooShort { segment: &'static str, length: usize },
    #[error("series of length {length} is shorter than context + prediction ({needed})")]
    SeriesTooShort { length: usize, needed: usize },
    #[error("channel count mismatch: expected {expected}, got {got}")]
    ChannelMismatch { expected: usize, got: usize },
    #[error("channel {0} is constant; cannot normalize")]
    DegenerateChannel(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    // predictors
    #[error("bad predictor dimensions: {0}")]
    BadDims(String),
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("batch is empty")]
    EmptyBatch,
    #[error("non-finite gradient{location}")]
    NonFiniteGradient { location: String },

    // constraints
    #[error("error vector is empty")]
    EmptyErrors,
    #[error("quantile {0} outside (0, 1)")]
    QOutOfRange(f64),
    #[error("exponential fit needs strictly positive errors")]
    NonPositiveErrors,
    #[error("need at least {needed} entries, got {got}")]
    TooShort { needed: usize, got: usize },

    // evaluation
    #[error("test set contains no windows")]
    EmptyTestSet,
    #[error("baseline metric `{0}` is zero")]
    ZeroBaseline(&'static str),
    #[error("rank correlation undefined: an input vector is constant")]
    DegenerateRanks,
    #[error("correlation undefined: an input vector has zero variance")]
    DegenerateVariance,
    #[error("every grid candidate failed")]
    AllCandidatesFailed,
    #[error("reports are not comparable: {0}")]
    ReportMismatch(String),

    // oracle
    #[error("oracle did not converge: {0}")]
    NotConverged(String),
    #[error("instance is outside the oracle's tractable class: {0}")]
    NotTractable(String),
    #[error("no feasible primal point found (fallback gap {fallback_gap:.3e} against oracle solution)")]
    InfeasibleFinal { fallback_gap: f64 },

    // configuration and artifacts
    #[error("invalid config field `{field}`: {reason}")]
    ConfigInvalid { field: String, reason: String },
    #[error("no ERM run found at {0}")]
    MissingErmTrace(PathBuf),
    #[error("malformed record in {what}: {reason}")]
    Format { what: String, reason: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Broad failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numerical,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        use Error::*;
        match self {
            ConfigInvalid { .. } | MissingErmTrace(_) | InvalidArgument(_) | BadDims(_) => {
                ErrorClass::Config
            }
            NonFiniteGradient { .. } | NotConverged(_) | InfeasibleFinal { .. }
            | AllCandidatesFailed | DegenerateRanks | DegenerateVariance => {
                ErrorClass::Numerical
            }
            _ => ErrorClass::Data,
        }
    }

    /// Stable short name of the variant, for machine-readable error records.
    pub fn kind(&self) -> &'static str {
        use Error::*;
        match self {
            MissingFile(_) => "MissingFile",
            ParseError { .. } => "ParseError",
            NonFiniteValue { .. } => "NonFiniteValue",
            EmptyDataset => "EmptyDataset",
            SegmentTooShort { .. } => "SegmentTooShort",
            SeriesTooShort { .. } => "SeriesTooShort",
            ChannelMismatch { .. } => "ChannelMismatch",
            DegenerateChannel(_) => "DegenerateChannel",
            InvalidArgument(_) => "InvalidArgument",
            BadDims(_) => "BadDims",
            DimMismatch(_) => "DimMismatch",
            EmptyBatch => "EmptyBatch",
            NonFiniteGradient { .. } => "NonFiniteGradient",
            EmptyErrors => "EmptyErrors",
            QOutOfRange(_) => "QOutOfRange",
            NonPositiveErrors => "NonPositiveErrors",
            TooShort { .. } => "TooShort",
            EmptyTestSet => "EmptyTestSet",
            ZeroBaseline(_) => "ZeroBaseline",
            DegenerateRanks => "DegenerateRanks",
            DegenerateVariance => "DegenerateVariance",
            AllCandidatesFailed => "AllCandidatesFailed",
            ReportMismatch(_) => "ReportMismatch",
            NotConverged(_) => "NotConverged",
            NotTractable(_) => "NotTractable",
            InfeasibleFinal { .. } => "InfeasibleFinal",
            ConfigInvalid { .. } => "ConfigInvalid",
            MissingErmTrace(_) => "MissingErmTrace",
            Format { .. } => "Format",
            Io { .. } => "Io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(what: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Format { what: what.into(), reason: reason.into() }
    }

    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::ConfigInvalid { field: field.into(), reason: reason.into() }
    }
}
