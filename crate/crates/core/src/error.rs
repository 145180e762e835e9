use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("initial condition is not in region 1")]
    NotInR1,

    #[error("integrator exceeded {max_steps} steps at t = {t}")]
    StepLimit { max_steps: usize, t: f64 },

    #[error("integrator step size underflow at t = {t}")]
    StepSizeUnderflow { t: f64 },

    #[error("state became non-finite at t = {t}")]
    NonFinite { t: f64 },

    #[error("return map left the section: x1 = {x1}, x3 = {x3}")]
    LeftSection { x1: f64, x3: f64 },

    #[error("return map left the section at a = {a}")]
    LeftSectionAt { a: f64 },

    #[error("monodromy x2-row residual {0:e} exceeds tolerance")]
    SectionResidual(f64),

    #[error("Newton iteration did not converge (residual {residual:e} after {iterations} iterations)")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("singular Jacobian: |det(DP^n - I)| = {0:e}")]
    SingularJacobian(f64),

    #[error("operation not applicable: {0}")]
    NotApplicable(String),

    #[error("continuation start point is not converged (residual {0:e})")]
    StartNotConverged(f64),

    #[error("fewer than three period-doubling events")]
    TooFewEvents,

    #[error("periodic point is not a saddle")]
    NotASaddle,

    #[error("unstable multiplier is not real")]
    ComplexUnstableMultiplier,

    #[error("equilibrium Z is not unstable (r^2/c - h^2 <= 0)")]
    ZStable,
}

pub type Result<T> = std::result::Result<T, Error>;
