use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("basis index {index} out of range 1..={degree}")]
    IndexOutOfRange { index: usize, degree: usize },

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("invalid series: {0}")]
    InvalidSeries(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("optimizer did not converge: {0}")]
    NonConvergence(String),

    #[error("constraints are infeasible")]
    Infeasible,

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("invalid metric specification: {0}")]
    InvalidSpec(String),

    #[error("need at least {required} bootstrap replicates, got {got}")]
    InsufficientReplicates { required: usize, got: usize },

    #[error("{failed} of {total} replicates failed (limit 5%)")]
    TooManyFailures { failed: usize, total: usize },

    #[error("empty input")]
    EmptyInput,

    #[error("relative bias undefined for zero truth")]
    ZeroTruth,

    #[error("quadrature did not settle: {nodes} vs {doubled} nodes differ by {discrepancy:e}")]
    IntegrationNonconvergence {
        nodes: usize,
        doubled: usize,
        discrepancy: f64,
    },

    #[error("Hessian is singular at the optimum")]
    SingularHessian,

    #[error("precondition failed: {0}")]
    Precondition(String),
}
