use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: malformed row: {message}")]
    Malformed { line: usize, message: String },

    #[error("line {line}: duplicate row for group {group:?}, system {system:?}, segment {segment:?}")]
    Duplicate {
        line: usize,
        group: String,
        system: String,
        segment: String,
    },

    #[error("line {line}: value {value} outside declared scale [{min}, {max}]")]
    ScaleViolation {
        line: usize,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("invalid data: {0}")]
    Invalid(String),

    #[error("group {group:?} has {count} system(s); at least 2 are needed to form pairs")]
    TooFewSystems { group: String, count: usize },

    #[error("empty selection: {0}")]
    EmptySelection(String),

    #[error("system {system:?} has no judgments")]
    NoJudgments { system: String },

    #[error("segment {segment:?} of system {system:?} has no score for metric {metric:?}")]
    MissingMetric {
        system: String,
        segment: String,
        metric: String,
    },

    #[error("metric {metric:?}: observation kind does not match aggregator {aggregator}")]
    KindMismatch { metric: String, aggregator: String },

    #[error("no repeat judgments: within-segment variance needs a segment with at least 2 judgments")]
    NoRepeatJudgments,

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("bootstrap trial {trial} failed")]
    Trial {
        trial: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(
        "decomposition identity violated for pair {pair}: err_obs {err_obs:.6} vs components {components:.6} (tolerance {tolerance:.6})"
    )]
    IdentityViolation {
        pair: String,
        err_obs: f64,
        components: f64,
        tolerance: f64,
    },

    #[error("instance too large for exhaustive enumeration: {0}")]
    TooLarge(String),

    #[error("replicates: {0}")]
    Replicates(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Whether the error stems from bad input data or arguments rather than
    /// from a failed computation.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::IdentityViolation { .. } => false,
            Error::Trial { source, .. } => source.is_input_error(),
            _ => true,
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
