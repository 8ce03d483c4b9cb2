use thiserror::Error;

use crate::features::Group;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("scenario infeasible: {0}")]
    ScenarioInfeasible(String),

    #[error("data integrity: {0}")]
    DataIntegrity(String),

    #[error("configuration: {0}")]
    Configuration(String),

    #[error("case {case} infeasible: group {group} unavailable at step {step} of pass {pass}")]
    CaseInfeasible {
        case: String,
        group: Group,
        pass: String,
        step: usize,
    },

    #[error("degenerate geometry: reference vectors are collinear (|v1 x v2| = {0:e})")]
    DegenerateGeometry(f64),

    #[error("empty evaluation: {0}")]
    EmptyEvaluation(String),

    #[error("incompatible model: {0}")]
    IncompatibleModel(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
