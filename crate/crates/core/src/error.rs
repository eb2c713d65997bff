use thiserror::Error;

use crate::dynamics::FlowStatus;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("degree overflow: {left} + {right} exceeds dimension {dim}")]
    DegreeOverflow { left: usize, right: usize, dim: usize },

    #[error("degree {degree} invalid for this operation on a {dim}-dimensional chart")]
    InvalidDegree { degree: usize, dim: usize },

    #[error("point lies within {margin:e} of the chart boundary (step {step:e})")]
    BoundaryMargin { margin: f64, step: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("non-finite Jacobian entry at ({row}, {col})")]
    NonFiniteJacobian { row: usize, col: usize },

    #[error("singular linear system (condition estimate {condition:e})")]
    Singular { condition: f64 },

    #[error("Hamiltonian vanishes at the evaluation point")]
    ZeroHamiltonian,

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("transversality failure: |xi(H)| = {value:e}")]
    Transversality { value: f64 },

    #[error("degenerate symplectic form: |det| = {det:e}")]
    DegenerateSymplectic { det: f64 },

    #[error("vector field not tangent to the level set: defect {defect:e}")]
    Tangency { defect: f64 },

    #[error("flow {status:?} at t = {reached} before reaching t = {requested}")]
    Domain { status: FlowStatus, reached: f64, requested: f64 },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("density vanishes at the initial point")]
    ZeroDensity,

    #[error("point excluded from the chart: {0}")]
    Excluded(String),
}

impl Error {
    /// True when an evaluation fell outside the domain (a flow left its box,
    /// a stencil crossed the chart edge, a point sits in an excluded region),
    /// as opposed to identity or precondition failures.
    pub fn is_domain_failure(&self) -> bool {
        matches!(self, Error::Domain { .. } | Error::BoundaryMargin { .. } | Error::Excluded(_))
    }
}
