//! Error type shared by every module of the crate.

use thiserror::Error;

/// Errors raised by schedule evaluation, agent solves, extraction, solvers,
/// the estimation pipeline and the oracle.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{value} lies outside the interpolation span [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("no interior solution: {0}")]
    NoInteriorSolution(String),

    #[error("second-order condition fails at {at}")]
    NonConcave { at: f64 },

    #[error("two separated local maxima at z = {first} and z = {second} (value gap {gap:e})")]
    MultipleOptima { first: f64, second: f64, gap: f64 },

    #[error("income is not strictly increasing in productivity near w = {w}")]
    NonMonotone { w: f64 },

    #[error("one-sided difference quotients disagree: forward {forward}, backward {backward}")]
    StepTooLarge { forward: f64, backward: f64 },

    #[error("profiles are defined on different grids: {0}")]
    GridMismatch(String),

    #[error("fixed point did not converge at z = {points:?}")]
    NoConvergence { points: Vec<f64> },

    #[error("denominator 1 - RR x_inc crosses zero at z = {z} within [{lo}, {hi}]")]
    SingularDenominator { z: f64, lo: f64, hi: f64 },

    #[error("z h(z) = {value:e} is degenerate at z = {z}")]
    DegenerateHazard { z: f64, value: f64 },

    #[error("implied wedge c = {c} >= 1 at z = {z}")]
    RateOutOfRange { z: f64, c: f64 },

    #[error("negative conditional variance {value} at z = {z}")]
    NegativeVariance { z: f64, value: f64 },

    #[error("commodity elasticity {value} is not positive at z = {z}")]
    DegenerateElasticity { z: f64, value: f64 },

    #[error("missing column: {0}")]
    MissingColumn(String),

    #[error("design matrix is rank deficient (rank {rank} < {cols})")]
    RankDeficient { rank: usize, cols: usize },

    #[error("after-tax income decreases between incomes {from} and {to}")]
    NonMonotoneAfterTax { from: f64, to: f64 },

    #[error("{n} support points supplied, at least {needed} required")]
    InsufficientSupport { n: usize, needed: usize },

    #[error("decile {decile} holds {count} respondents, at least 10 required")]
    SparseDecile { decile: usize, count: usize },

    #[error("agent (w = {w}, theta = {theta}) failed: {source}")]
    SolverFailure {
        w: f64,
        theta: f64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Wrap an agent-level failure with the type that produced it.
    pub fn at_agent(self, w: f64, theta: f64) -> Error {
        match self {
            e @ Error::SolverFailure { .. } => e,
            other => Error::SolverFailure { w, theta, source: Box::new(other) },
        }
    }
}
