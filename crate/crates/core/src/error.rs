use std::path::PathBuf;

/// Errors produced by the split-door library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A parameter was outside its documented domain.
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// An event stream contained no usable rows.
    #[error("no valid events")]
    NoValidEvents,

    /// A panel or period list was empty where data is required.
    #[error("no testable periods")]
    NoTestablePeriods,

    /// Empty input where at least one element is required.
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    /// Independence test called with mismatched or too-short vectors.
    #[error("independence test requires equal-length vectors of length >= 2 (got {x_len} and {y_len})")]
    BadVectors { x_len: usize, y_len: usize },

    /// Null pool is unusable for the requested test.
    #[error("null pool error: {0}")]
    NullPool(String),

    /// No instances survived discovery, so a downstream quantity is undefined.
    #[error("no discovered instances")]
    NoInstances,

    /// Denominator of a ratio estimate is zero.
    #[error("zero treatment traffic: ratio estimate undefined")]
    ZeroTreatment,

    /// A CSV file could not be read at all (I/O or header problem).
    #[error("failed to read {path}: {reason}")]
    CsvRead { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    /// A pipeline stage failed; carries the stage name for context.
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// True when the error reflects bad or insufficient input data rather
    /// than a usage or internal fault. CLI exit-code mapping relies on this.
    pub fn is_data_error(&self) -> bool {
        match self {
            Error::NoValidEvents
            | Error::NoTestablePeriods
            | Error::EmptyInput(_)
            | Error::NoInstances
            | Error::ZeroTreatment
            | Error::CsvRead { .. } => true,
            Error::Stage { source, .. } => source.is_data_error(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
