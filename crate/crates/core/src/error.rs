use thiserror::Error;

/// Errors produced across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("zero Pochhammer denominator at term {term} of the terminating 2F1 sum")]
    ZeroPochhammer { term: u32 },

    #[error("hypergeometric term {term} is negative; positive-term evaluation does not apply")]
    NegativeTerm { term: u32 },

    #[error("derivative normalization G'(1) = {value} is not finite and positive")]
    VanishingDerivative { value: f64 },

    #[error("coefficient {index} is {value:e}, beyond the rounding tolerance for a probability")]
    NegativeCoefficient { index: usize, value: f64 },

    #[error("pmf mass {mass} with tail bound {tail_bound} is not normalized")]
    Unnormalized { mass: f64, tail_bound: f64 },

    #[error("g2 is undefined for mean {mean:e}")]
    UndefinedG2 { mean: f64 },

    #[error("tail did not converge below {tolerance:e} within {limit} terms")]
    TailNotConverged { tolerance: f64, limit: usize },

    #[error("acceptance rate {rate:e} fell below floor {floor:e} after {attempts} trials")]
    AcceptanceTooLow { rate: f64, floor: f64, attempts: u64 },

    #[error("timestamps on channel {channel} are not sorted at index {index}")]
    UnsortedTimestamps { channel: usize, index: usize },

    #[error("line {line}: {message}")]
    Format { line: usize, message: String },

    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("only {cells} histogram cell(s) after pooling; need {needed}")]
    TooFewCells { cells: usize, needed: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
