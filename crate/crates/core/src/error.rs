use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dataset must contain an odd number of locations, got {n}")]
    EvenCount { n: usize },

    #[error("location {value} lies outside [{lo}, {hi}]")]
    OutOfDomain { value: f64, lo: f64, hi: f64 },

    #[error("diameter must be positive and finite, got {m}")]
    NonPositiveDiameter { m: f64 },

    #[error("datasets have different sizes ({a} vs {b})")]
    SizeMismatch { a: usize, b: usize },

    #[error("operands live on domains of different diameter ({a} vs {b})")]
    DomainMismatch { a: f64, b: f64 },

    #[error("facility location {value} lies outside [{lo}, {hi}]")]
    LocationOutOfDomain { value: f64, lo: f64, hi: f64 },

    #[error("output density has no piece of positive length")]
    DegenerateSupport,

    #[error("invalid certificate: {0}")]
    InvalidCertificate(String),

    #[error("consecutive locations at index {index} coincide; the certificate density is undefined")]
    ZeroGap { index: usize },

    #[error("dataset is not collapsing towards the median")]
    NotCtm,

    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("k={k} must satisfy 0 <= k < {limit}")]
    InvalidK { k: usize, limit: usize },

    #[error("beta={beta} must lie in the open interval (0, {hi})")]
    BetaOutOfRange { beta: f64, hi: f64 },

    #[error("malformed JSON: {0}")]
    Json(String),
}

pub type Result<T> = std::result::Result<T, Error>;
