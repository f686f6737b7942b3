use thiserror::Error;

/// Errors raised by the modelling and optimization routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{what} = {value} is outside its domain ({expected})")]
    Domain {
        what: &'static str,
        value: f64,
        expected: &'static str,
    },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("rate target {target:.6} nats/s/Hz is infeasible (best achievable {max_rate:.6})")]
    Infeasible { target: f64, max_rate: f64 },
    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("non-finite value encountered in {0}")]
    NonFinite(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn is_infeasible(&self) -> bool {
        matches!(self, Error::Infeasible { .. })
    }
}
