use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension d = {0}; hyperbolic space needs d >= 2")]
    InvalidDimension(usize),

    #[error("invalid Lebesgue exponent p = {0}; need p >= 1 or p = infinity")]
    InvalidExponent(f64),

    #[error("exponents out of order: need p <= q, got p = {p}, q = {q}")]
    ExponentOrder { p: f64, q: f64 },

    #[error("time must be {expect}, got t = {t}")]
    InvalidTime { t: f64, expect: &'static str },

    #[error("radial grid too coarse: {nodes} nodes, need at least {min}")]
    GridTooCoarse { nodes: usize, min: usize },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("fields live on different radial grids")]
    GridMismatch,

    #[error("non-finite value at node {index}")]
    NonFinite { index: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("calibration infeasible: {0}")]
    InfeasibleFit(String),

    #[error("contraction margin 2*M*rho + N*|h| = {margin:.6e} is not < 1 (M = {m:.6e}, N = {n:.6e}, rho = {rho:.6e}, |h| = {h_norm:.6e})")]
    ContractionMargin {
        margin: f64,
        m: f64,
        n: f64,
        rho: f64,
        h_norm: f64,
    },

    #[error("ball condition violated: |init| + M(rho^2 + |(F,f)|) + N|h|rho = {lhs:.6e} > rho = {rho:.6e}")]
    BallCondition { lhs: f64, rho: f64 },

    #[error("no convergence after {iterations} iterations (last difference {last_diff:.3e}, ratios {ratios:?})")]
    NotConverged {
        iterations: usize,
        last_diff: f64,
        ratios: Vec<f64>,
    },

    #[error("trajectory horizon {horizon} is shorter than the period {period}")]
    HorizonTooShort { horizon: f64, period: f64 },

    #[error("time {t} is not a node of the trajectory grid")]
    OffGrid { t: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("constants file: {0}")]
    Constants(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
