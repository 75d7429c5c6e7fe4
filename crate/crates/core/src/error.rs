use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not Hermitian (relative asymmetry {asymmetry:.3e})")]
    NotHermitian { asymmetry: f64 },

    #[error("singular channel: {0}")]
    SingularChannel(String),

    #[error("SDP objective is unbounded")]
    Unbounded,

    #[error("numerical failure in SDP solver: {0}")]
    Numerical(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("reflection for receive antenna {antenna} is infeasible after {attempts} dominance relaxations")]
    AntennaInfeasible { antenna: usize, attempts: usize },

    #[error("hypothesis count {count} exceeds the detector limit {limit}")]
    TooManyHypotheses { count: u64, limit: u64 },
}
