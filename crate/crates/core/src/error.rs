use thiserror::Error;

use crate::base::BasePoint;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("precondition failed: {0}")]
    PreconditionFailed(String),
    #[error("invariant graph escaped Γ along the orbit of {theta:?} (orbit index {index})")]
    GraphEscaped { theta: BasePoint, index: usize },
    #[error("graph fields do not match: {0}")]
    MismatchedFields(String),
    #[error("set is not invariant under the base map")]
    NotInvariant,
    #[error("domain error: {0}")]
    Domain(String),
    #[error("no bracket: {0}")]
    NoBracket(String),
    #[error("trajectory blew up at t = {t} (x = {x:e})")]
    Blowup { t: f64, x: f64 },
    #[error("sampled validation failed: {}", .0.join("; "))]
    ValidationFailed(Vec<String>),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
