use thiserror::Error;

/// Errors raised by the matrix kernels, steppers, factorizers and loaders.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// A matrix lost the sign pattern (or zero column sums) it was required to have.
    #[error("structure violation: {0}")]
    Structure(String),

    /// Step outside the region where the rational exponential keeps nonnegativity.
    #[error("outside stability region: {0}; use a smaller step")]
    StabilityRegion(String),

    #[error("linear solve failed: {0}")]
    Solve(String),

    #[error("step {step} at t = {t}: {source}")]
    Step {
        step: usize,
        t: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("schema error at {location}: {message}")]
    Schema { location: String, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn schema(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            location: location.into(),
            message: message.into(),
        }
    }

    /// The innermost error, with any step context removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::Step { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
