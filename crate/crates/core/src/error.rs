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

    #[error("{context}: {message}")]
    Parse { context: String, message: String },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("invalid layer selector: {0}")]
    InvalidSelector(String),

    #[error("{context}: row {row}, column {column}: {message}")]
    Schema {
        context: String,
        row: usize,
        column: String,
        message: String,
    },

    #[error("no features configured")]
    NoFeatures,

    #[error("invalid feature: {0}")]
    InvalidFeature(String),

    #[error("input id {0:?} appears in both train and test partitions")]
    OverlappingSplits(String),

    #[error("dataset has no label column for feature {0:?}")]
    MissingLabel(String),

    #[error("degenerate feature {feature:?}: {positives} positive and {negatives} negative training rows")]
    DegenerateFeature {
        feature: String,
        positives: usize,
        negatives: usize,
    },

    #[error("invalid criterion: {0}")]
    InvalidCriterion(String),

    #[error("cannot build an ensemble from an empty rule list")]
    EmptyRules,

    #[error("no presence rules for feature {0:?} at any layer")]
    NoRules(String),

    #[error("feature sets differ: {0}")]
    FeatureMismatch(String),

    #[error("invalid config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(context: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.to_string(),
        }
    }
}
