use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("singular leading coefficient (condition number {cond:.3e})")]
    SingularLeading { cond: f64 },

    #[error("evaluation point |z| = {modulus} is not on the unit circle")]
    OffUnitCircle { modulus: f64 },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("(A, B2) is not stabilizable")]
    NotStabilizable,

    #[error("(A, C2) is not detectable")]
    NotDetectable,

    #[error("{what}: residual {residual:.3e} exceeds tolerance {tol:.1e}")]
    Residual { what: String, residual: f64, tol: f64 },

    #[error("Riccati iteration did not converge after {0} steps")]
    RiccatiDiverged(usize),

    #[error("infeasible constraints: least-squares residual {residual:.3e}")]
    Infeasible { residual: f64 },

    #[error("pattern is not quadratically invariant under the plant")]
    QiViolation,

    #[error("solver failure: {0}")]
    Solver(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim(msg: impl Into<String>) -> Error {
    Error::Dimension(msg.into())
}
