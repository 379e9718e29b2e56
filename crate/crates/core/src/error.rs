use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),
    #[error("degenerate matrix: {0}")]
    Degenerate(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("matrix is not positive semidefinite (min eigenvalue {min_eig:e}, max {max_eig:e})")]
    NotPsd { min_eig: f64, max_eig: f64 },
    #[error("environment has no samples")]
    EmptyEnvironment,
    #[error("degenerate penalty coefficient: denominator {0:e}")]
    DegenerateCoefficient(f64),
    #[error("invalid specification: {0}")]
    Spec(String),
    #[error("spurious shuffle requested after scrambling (no spurious index set)")]
    Ordering,
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("singular covariance: {0}")]
    SingularCovariance(String),
    #[error("training diverged at step {step}: loss {loss}")]
    Diverged { step: usize, loss: f64 },
}
