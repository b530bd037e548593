use alloc::string::String;
use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("parameter outside the model domain: {0}")]
    Domain(String),

    #[error("model invariant violated: {0}")]
    Model(String),

    #[error("model is not regular: {0}")]
    Regularity(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("state is singular (min eigenvalue {0:e})")]
    SingularState(f64),

    #[error("Fisher matrix is singular or ill-conditioned: {0}")]
    SingularQfim(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("optimizer failed: {0}")]
    Optimizer(String),

    #[error("constraints are infeasible: {0}")]
    Infeasible(String),

    #[error("unsupported model shape: {0}")]
    ModelShape(String),

    #[error("rank deficient: {0}")]
    Rank(String),

    #[error("invalid POVM: {0}")]
    InvalidPovm(String),

    #[error("outcome {0} has vanishing probability but nonzero derivative")]
    SingularOutcome(usize),

    #[error("no convergence: {0}")]
    Convergence(String),

    #[error("integration step failed: {0}")]
    Step(String),

    #[error("internal consistency check failed: {0}")]
    Consistency(String),
}

impl Error {
    /// True for errors caused by bad input (model, configuration, shapes) rather than
    /// by a numerical failure.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Domain(_)
                | Error::Model(_)
                | Error::Config(_)
                | Error::Dimension(_)
                | Error::ModelShape(_)
                | Error::InvalidPovm(_)
        )
    }
}

pub type Result<T> = core::result::Result<T, Error>;
