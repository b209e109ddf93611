use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A physical or control parameter violates one of the standing
    /// hypotheses (positivity of `a`, `q`, boundary constants).
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({what})")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("operation not available for variant {variant}: {reason}")]
    Variant { variant: String, reason: String },

    #[error("simulation diverged at t = {t} (|state| = {norm:e}, last finite t = {last_valid_t})")]
    Divergence {
        t: f64,
        norm: f64,
        last_valid_t: f64,
    },

    /// `1 + dt R[i]/E[i] <= 0`: the implicit velocity update is undefined.
    #[error("implicit velocity update undefined at node {node}: need dt < {dt_bound:e}")]
    StepUndefined { node: usize, dt_bound: f64 },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("certification failed: {0}")]
    Certification(String),

    #[error("decay fit unavailable: {0}")]
    Fit(String),

    #[error("configuration error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
