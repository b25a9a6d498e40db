use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid lattice model: {0}")]
    InvalidModel(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("grid too coarse: dx = {dx:.3e} exceeds sqrt(hbar)/8 = {limit:.3e}")]
    Resolution { dx: f64, limit: f64 },

    #[error("grid mismatch: expected {expected} samples, got {got}")]
    GridMismatch { expected: usize, got: usize },

    #[error("eigensolver did not converge: {0}")]
    EigenSolver(String),

    #[error("empty first gap: E2_bottom - E1_top = {gap:.3e}")]
    EmptyGap { gap: f64 },

    #[error("Gram matrix of projected well states is singular (condition number {condition:.3e})")]
    SingularGram { condition: f64 },

    #[error("hopping coefficient has the wrong sign after gauge fixing: beta = {beta:.3e}")]
    GaugeFailure { beta: f64 },

    #[error("time step violates the phase-resolution rule: dt*max|V+FW|/hbar = {ratio:.3} > 0.1")]
    TimeStep { ratio: f64 },

    #[error("non-finite field at step {step}")]
    NonFinite { step: usize },

    #[error("norm drift {drift:.3e} persists after {halvings} step halvings")]
    NormDrift { drift: f64, halvings: u32 },

    #[error("time mismatch between field ({field:.6e}) and lattice ({lattice:.6e}) states")]
    TimeMismatch { field: f64, lattice: f64 },

    #[error("fit needs at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("{0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
