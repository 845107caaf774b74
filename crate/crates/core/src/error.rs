use alloc::string::String;

/// Errors raised by chain construction and the numerical routines built on top of it.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("chain has no states")]
    Empty,
    #[error("symmetrizing mass at state {state} must be strictly positive, got {value}")]
    NonPositiveMass { state: usize, value: f64 },
    #[error("negative rate {value} at ({from}, {to})")]
    NegativeRate { from: usize, to: usize, value: f64 },
    #[error("negative killing rate {value} at state {state}")]
    NegativeKilling { state: usize, value: f64 },
    #[error("state index {index} out of range for {n} states")]
    StateOutOfRange { index: usize, n: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("detailed balance violated at ({from}, {to}): relative defect {defect:e}")]
    DetailedBalance { from: usize, to: usize, defect: f64 },
    #[error("rate graph is not connected: state {unreachable} unreachable from state 0")]
    NotConnected { unreachable: usize },
    #[error("jump perturbation is not symmetric at ({from}, {to})")]
    AsymmetricJump { from: usize, to: usize },
    #[error("jump perturbation has nonzero diagonal at state {0}")]
    DiagonalJump(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("negative time {0}")]
    NegativeTime(f64),
    #[error("negative rate parameter alpha = {0}")]
    NegativeAlpha(f64),
    #[error("chain is not transient: Green operator at alpha = 0 needs killing")]
    NotTransient,
    #[error("conservative chain has no finite lifetime; pass an alpha-subprocess")]
    NoLifetime,
    #[error("measure has negative atom {value} at state {state}")]
    NegativeMeasure { state: usize, value: f64 },
    #[error("input is not gaugeable (lambda2 = {lambda2:e})")]
    NotGaugeable { lambda2: f64 },
    #[error("exponential moment of order {p} is infinite (lambda2 = {lambda2:e})")]
    MomentInfinite { p: f64, lambda2: f64 },
    #[error("jump bound violated: b[{from}][{to}] = {value} is not > -1")]
    JumpBoundViolated { from: usize, to: usize, value: f64 },
    #[error("Monte Carlo sample count {0} below minimum of 100")]
    TooFewSamples(usize),
    #[error("not converged: {0}")]
    NotConverged(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("linear solve failed: {0}")]
    Solve(&'static str),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
