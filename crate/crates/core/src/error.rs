use thiserror::Error;

use crate::protocol::Flavor;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid direction: norm {norm} is not within 1e-6 of 1")]
    InvalidDirection { norm: f64 },

    #[error("invalid joint law: {0}")]
    InvalidLaw(String),

    #[error("value {value} outside [{lo}, {hi}]")]
    Range { value: f64, lo: f64, hi: f64 },

    #[error("verdict flavor mismatch: expected {expected:?}, found {found:?}")]
    Flavor { expected: Flavor, found: Flavor },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("setting outside the model's domain: {0}")]
    Domain(String),

    #[error("experiment requested with zero trials")]
    EmptyExperiment,

    #[error("insufficient data: {n_accepted} accepted trials (need at least {required})")]
    InsufficientData { n_accepted: u64, required: u64 },
}

pub type Result<T> = std::result::Result<T, Error>;
