use thiserror::Error;

/// Errors raised by model construction, operator algebra and the expansion pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed model file: {0}")]
    Parse(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("normalization violated at vertex {vertex}: local sum {value:.6e} exceeds {limit:.6e}")]
    Normalization { vertex: usize, value: f64, limit: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("support {inner:?} is not contained in {outer:?}")]
    NotSubset { inner: Vec<usize>, outer: Vec<usize> },

    #[error("operator is not Hermitian (deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("operator is not positive definite (smallest eigenvalue {min_eigenvalue:.3e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("regions must be pairwise disjoint")]
    Overlap,

    #[error("inverse temperature {beta:.6e} is not below the threshold {beta_c:.6e}")]
    AboveThreshold { beta: f64, beta_c: f64 },

    #[error("{what} requires dimension {cost}, above the configured ceiling {ceiling}")]
    CostCeiling { what: &'static str, cost: u128, ceiling: u128 },

    #[error("system of {sites} sites exceeds the exact-diagonalization limit of {limit}")]
    SizeLimit { sites: usize, limit: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
