use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("degenerate spectrum: {0}")]
    DegenerateSpectrum(String),
    #[error("aspect ratio {0} outside (0, 1]")]
    BadAspect(f64),
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("state is zero; the enstrophy/energy ratio is undefined")]
    ZeroState,
    #[error("series diverges: z * b' = {0} >= 1")]
    DivergentSeries(f64),
    #[error("spectrum is not torus-sourced")]
    NotTorusSourced,
    #[error("field index {index} out of range (M = {len})")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("point (u = {u}, v = {v}) lies outside the cone")]
    OutsideCone { u: f64, v: f64 },
    #[error("polytope is degenerate (boundary point of the cone)")]
    DegeneratePolytope,
    #[error("exact volume/centroid unavailable above dimension 8 (got {0})")]
    DimensionTooHigh(usize),
    #[error("negative radial coordinate {0} (sigma outside the polytope)")]
    NegativeRadial(f64),
    #[error("ratio {ratio} outside [1, {max}]")]
    RatioOutOfRange { ratio: f64, max: f64 },
    #[error("implicit midpoint iteration failed to converge (residual {residual:e} after {iterations} iterations)")]
    MidpointDiverged { residual: f64, iterations: usize },
    #[error("trajectory aborted after repeated step halving at t = {t}: {reason}")]
    TrajectoryAborted { t: f64, reason: String },
    #[error("non-finite state at t = {t}; last finite state {last_finite:?}")]
    NonFinite { t: f64, last_finite: Vec<f64> },
    #[error("matrix is not positive semidefinite (min eigen-quantity {0:e})")]
    NotPsd(f64),
    #[error("effective step stuck at the cone boundary from (u = {u}, v = {v})")]
    StuckAtBoundary { u: f64, v: f64 },
    #[error("series too short: {0}")]
    TooShort(String),
    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("state is not in the good set: {0}")]
    NotGoodState(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
