use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Error, Debug)]
pub enum IcaError {
    /// A valuation descriptor violates its family constraints.
    #[error("invalid valuation: {0}")]
    InvalidValuation(String),

    /// An argument is outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A requested slope is not a supergradient of the valuation anywhere.
    #[error("slope {slope} outside admissible range [{min}, {max}]")]
    SlopeRange { slope: f64, min: f64, max: f64 },

    /// An instance fails schema or value validation. The message names the
    /// offending field.
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    /// The gap generator cannot produce an instance for this valuation.
    #[error("gap generator: {0}")]
    Gap(String),

    /// An exhaustive computation would exceed its size guard.
    #[error("size guard exceeded: {0}")]
    SizeGuard(String),

    /// The guessing wrapper exhausted its guess budget.
    #[error("guess cap exceeded: {0}")]
    GuessCap(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, IcaError>;
