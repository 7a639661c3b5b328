use thiserror::Error;

use crate::instance::ValidationError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid instance: {}", format_violations(.0))]
    Invalid(Vec<ValidationError>),

    #[error("dimension mismatch in {what}: expected {expected}, got {actual}")]
    Dimension {
        what: String,
        expected: usize,
        actual: usize,
    },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("observation {index} is not positive ({value})")]
    NonPositiveObservation { index: usize, value: f64 },

    #[error("degenerate sample: {0}")]
    Degenerate(String),

    #[error("no branch set for regime {0}")]
    MissingRegime(String),

    #[error("scenario probabilities sum to {0}, expected 1")]
    ProbabilitySum(f64),

    #[error("k = {k} out of range 1..={n}")]
    KOutOfRange { k: usize, n: usize },

    #[error("unit cost of product {0} is zero; purchases are unbounded")]
    ZeroUnitCost(usize),

    #[error("model is infeasible: {0}")]
    Infeasible(String),

    #[error("solver error: {0}")]
    Solver(String),

    #[error("solution replay mismatch: {0}")]
    Replay(String),

    #[error("LP format error at line {line}: {message}")]
    LpFormat { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn format_violations(v: &[ValidationError]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Invalid(_) => "invalid_instance",
            Error::Dimension { .. } => "dimension_mismatch",
            Error::Input(_) => "invalid_input",
            Error::NonPositiveObservation { .. } => "non_positive_observation",
            Error::Degenerate(_) => "degenerate_sample",
            Error::MissingRegime(_) => "missing_regime",
            Error::ProbabilitySum(_) => "probability_sum",
            Error::KOutOfRange { .. } => "k_out_of_range",
            Error::ZeroUnitCost(_) => "zero_unit_cost",
            Error::Infeasible(_) => "infeasible",
            Error::Solver(_) => "solver",
            Error::Replay(_) => "replay_mismatch",
            Error::LpFormat { .. } => "lp_format",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}
