use thiserror::Error;

pub type Result<T, E = TomoError> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TomoError {
    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid measurement axis: {0}")]
    InvalidAxis(String),

    #[error("perturbation must be traceless and Hermitian: {0}")]
    InvalidPerturbation(String),

    #[error("state is rank deficient (smallest eigenvalue {min_eigenvalue:e}); quadratic approximation undefined")]
    RankDeficient { min_eigenvalue: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("measurement axes do not span 3-space; unconstrained direction {null_direction:?}")]
    Underdetermined { null_direction: [f64; 3] },

    #[error("budget of {n} shots cannot give each of the {required} required settings at least one shot")]
    Budget { n: u64, required: u64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}
