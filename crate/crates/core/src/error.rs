use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("infeasible geometry: {0}")]
    InfeasibleGeometry(String),
    #[error("quadrature did not converge: {0}")]
    NonConvergence(String),
    #[error("closed form and quadrature disagree: {0}")]
    ConstantsMismatch(String),
    #[error("at interpolation threshold: |phi - p| = {0:e}")]
    InterpolationThreshold(f64),
    #[error("curation kept no samples")]
    EmptyKeptSet,
    #[error("degenerate estimator (w_hat = 0)")]
    DegenerateEstimator,
    #[error("value outside its admissible band: {0}")]
    OutOfBand(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
