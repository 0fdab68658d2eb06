use thiserror::Error;

/// Errors raised by the discretization, the structure algebra and the solvers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("field contains non-finite values ({0})")]
    InvalidField(&'static str),

    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),

    #[error("operands live on different grids")]
    GridMismatch,

    #[error("right-hand side is not solvable: mean {mean:e} exceeds tolerance")]
    NotSolvable { mean: f64 },

    #[error("2-form is not closed: max |d omega| = {residual:e}")]
    NotClosed { residual: f64 },

    #[error("structure is not compatible: {0}")]
    NotCompatible(String),

    #[error("metric is not positive definite (min eigenvalue {min_eigenvalue:e})")]
    NotPositive { min_eigenvalue: f64 },

    #[error("2-form is not J-invariant: max |P_J^- alpha| = {residual:e}")]
    NotInvariant { residual: f64 },

    #[error("generalized eigenvalues do not pair (mismatch {mismatch:e})")]
    PairingBroken { mismatch: f64 },

    #[error("anti-invariant frame degenerates (normalized Gram determinant {gram:e})")]
    FrameDegenerate { gram: f64 },

    #[error("iterative solve did not converge in {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("Newton iteration did not converge in {iterations} iterations (residual {residual:e})")]
    NewtonDiverged { iterations: usize, residual: f64 },

    #[error("line search could not keep the iterate positive (min a1 {min_a1:e})")]
    PositivityLost { min_a1: f64 },

    #[error("Krylov solve stalled at relative residual {relative:e}")]
    KrylovStall { relative: f64 },

    #[error("continuation step {step:e} fell below the floor at t = {t}")]
    StepUnderflow { t: f64, step: f64 },

    #[error("2-form does not tame J (min eigenvalue of the symmetric part {min_eigenvalue:e})")]
    NotTaming { min_eigenvalue: f64 },

    #[error("harmonic anti-invariant part obstructs the construction (|kappa| = {norm:e})")]
    ObstructionNonzero { norm: f64 },

    #[error("solve cancelled")]
    Cancelled,
}

pub type Result<T> = std::result::Result<T, Error>;
