use thiserror::Error;

/// Errors raised by the framework.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum PocError {
    /// An input is outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A cost or value became NaN or infinite.
    #[error("numeric error at step {step}: {detail}")]
    Numeric { step: usize, detail: String },

    /// A realized disturbance or observation has no support in the belief.
    #[error("support error: {0}")]
    Support(String),

    /// A configured size cap was exceeded.
    #[error("capacity error: {what} needs {actual} but the cap is {limit}")]
    Capacity {
        what: &'static str,
        limit: usize,
        actual: usize,
    },

    /// No admissible control exists.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// A documented precondition of the operation does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("data format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, PocError>;

impl PocError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        PocError::Domain(msg.into())
    }

    pub(crate) fn support(msg: impl Into<String>) -> Self {
        PocError::Support(msg.into())
    }

    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        PocError::Precondition(msg.into())
    }
}

impl From<csv::Error> for PocError {
    fn from(e: csv::Error) -> Self {
        PocError::Format(e.to_string())
    }
}
