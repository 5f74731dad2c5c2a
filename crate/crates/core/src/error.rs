use thiserror::Error;

/// Errors surfaced by distributions, oracles, estimators and the harness.
#[derive(Debug, Error)]
pub enum Error {
    /// The oracle's global draw budget was exhausted. Never silently truncates.
    #[error("sample budget exceeded: {drawn} draws against a cap of {cap}")]
    BudgetExceeded { drawn: u64, cap: u64 },

    /// The rejection sampler ran out of its crash budget. This is a
    /// distinguished result, not a fatal condition: callers that own the
    /// conditional oracle decide what the crash means (the large-norm advice
    /// finder maps it to the advice 0).
    #[error("rejection sampler crashed on request {request}")]
    RejectionCrash { request: u64 },

    /// A retry loop hit its iteration cap. The cap is generous enough that
    /// reaching it indicates a broken input rather than bad luck.
    #[error("{proc} exceeded its iteration cap of {cap}")]
    IterationCap { proc: &'static str, cap: u64 },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown zoo distribution `{0}`")]
    UnknownZoo(String),

    /// Precondition of a lower-bound construction does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("distribution spec parse error at byte {pos}: {msg}")]
    ParseSpec { pos: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
