use thiserror::Error;

/// Errors raised by the library.
///
/// Variants split into two families: invalid input ([`Error::is_numerical`]
/// returns `false`) and failures of the numerics themselves (domain, overflow,
/// divergence, singular systems).
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("domain error at layer {layer}: argument {arg} outside the evaluable domain (radius {radius})")]
    Domain { layer: usize, arg: f64, radius: f64 },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("diverged at step {step}: objective is {value}")]
    Divergence { step: usize, value: f64 },

    #[error("near-singular system: eigenvalue {eigenvalue} shifted by {shift} is below {threshold}")]
    Singular { eigenvalue: f64, shift: f64, threshold: f64 },

    #[error("feature space too large: more than {limit} indices at level {level}")]
    TooLarge { level: usize, limit: usize },

    #[error("precondition not met: {0}")]
    Precondition(String),

    #[error("entry ({i}, {j}): {source}")]
    Entry { i: usize, j: usize, source: Box<Error> },
}

impl Error {
    /// True for numerical-domain failures, false for input validation errors.
    pub fn is_numerical(&self) -> bool {
        if let Error::Entry { source, .. } = self {
            return source.is_numerical();
        }
        matches!(
            self,
            Error::Domain { .. } | Error::NonFinite(_) | Error::Divergence { .. } | Error::Singular { .. }
        )
    }

    /// Re-tags a domain error with the layer it occurred in.
    pub(crate) fn at_layer(self, layer: usize) -> Self {
        match self {
            Error::Domain { arg, radius, .. } => Error::Domain { layer, arg, radius },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
