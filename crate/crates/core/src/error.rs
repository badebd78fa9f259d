use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A parameter or configuration value is outside its valid range.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// An argument is outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Quadrature or an iterative method did not reach the requested tolerance.
    #[error("numerical failure: {message} (achieved error {achieved:e})")]
    Numerical { message: String, achieved: f64 },

    /// A grid is too coarse or would exceed its memory budget.
    #[error("resolution error: {message}; suggested step {suggested_step:e}")]
    Resolution { message: String, suggested_step: f64 },

    /// The per-cycle hack probability is too small to evaluate in floating point.
    #[error("p_m = {p:e} underflows; use the Monte Carlo engine instead")]
    Underflow { p: f64 },

    /// A replication ran past its cycle cap without a successful hack.
    #[error("replication {replication} exceeded {cap} cycles without a hack; p_m is numerically zero")]
    Runaway { replication: u64, cap: u64 },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
