use thiserror::Error;

use crate::expr::ParseError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failure modes shared by every numerical operation in the crate.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("point {point:?} lies outside the chart domain of `{manifold}`")]
    OutsideDomain { manifold: String, point: Vec<f64> },

    #[error("finite-difference stencil around {point:?} leaves the chart domain of `{manifold}`")]
    Stencil { manifold: String, point: Vec<f64> },

    #[error("non-finite connection coefficients at {point:?}")]
    NonFinite { point: Vec<f64> },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("parameter {value} outside the interval [{start}, {end}] of curve `{curve}`")]
    ParameterOutOfRange {
        curve: String,
        value: f64,
        start: f64,
        end: f64,
    },

    #[error("curve `{curve}` leaves the chart domain at parameter {at}")]
    LeftDomain { curve: String, at: f64 },

    #[error("trajectory truncated at parameter {at}: it left the chart domain")]
    Truncated { at: f64 },

    #[error("vector base point {got:?} does not match curve point {expected:?}")]
    BasePointMismatch { expected: Vec<f64>, got: Vec<f64> },

    #[error("scenario consistency violated: {identity} (mismatch {mismatch:e})")]
    ScenarioConsistency { identity: String, mismatch: f64 },

    #[error("degenerate scaling factor lambda = 0")]
    DegenerateScaling,

    #[error("geodesic shooting did not converge after {iterations} iterations (residual {residual:e})")]
    ShootingFailed { iterations: usize, residual: f64 },

    #[error("invalid configuration: {0}")]
    Configuration(String),

    #[error("order fit failed: {0}")]
    Fit(String),

    #[error(transparent)]
    Parse(#[from] ParseError),
}
