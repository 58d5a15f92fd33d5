use thiserror::Error;

/// Structural errors from network construction and evaluation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dim { expected: usize, got: usize },
    #[error("shape error: {0}")]
    Shape(String),
    #[error("depth error: {0}")]
    Depth(String),
    #[error("network has no layers")]
    Empty,
    #[error("non-finite weight or bias")]
    NonFinite,
    #[error("json: {0}")]
    Json(String),
}

/// Errors from approximator construction and certification.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ApproxError {
    #[error("target error {0} outside (0, 1/2)")]
    Epsilon(f64),
    #[error("invalid domain [{0}, {1}]")]
    Domain(f64, f64),
    #[error("non-finite sample of the target function at {0}")]
    NonFinite(f64),
    #[error("certification failed: measured {measured:e} > target {target:e} after {cells} cells")]
    Certification {
        measured: f64,
        target: f64,
        cells: usize,
    },
    #[error("error ledger exceeds budget: {ledger:e} > {target:e}")]
    Ledger { ledger: f64, target: f64 },
    #[error(transparent)]
    Net(#[from] NetError),
}

/// Errors from simulation and pricing.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("non-finite state at step {step} of path {path}")]
    NonFinite { path: usize, step: usize },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("covariance matrix not positive semidefinite at pivot {0}")]
    NotPsd(usize),
    #[error(transparent)]
    Approx(#[from] ApproxError),
    #[error(transparent)]
    Net(#[from] NetError),
}
