use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("grid has {n} nodes, at least {min} are required")]
    GridTooSmall { n: usize, min: usize },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("non-finite value {value} at node {index}")]
    NonFinite { index: usize, value: f64 },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("{what} = {value} is outside the domain {domain}")]
    OutOfDomain {
        what: &'static str,
        value: f64,
        domain: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("newton iteration did not converge in {iters} iterations (dt = {dt:e}, residual = {residual:e})")]
    NewtonNonConvergence {
        iters: usize,
        dt: f64,
        residual: f64,
    },

    #[error("newton residual stagnated at {residual:e} (dt = {dt:e})")]
    NewtonStagnation { dt: f64, residual: f64 },

    #[error("time step underflow at t = {t:e}: {cause}")]
    StepUnderflow { t: f64, cause: String },

    #[error("not enough data: {0}")]
    InsufficientData(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn out_of_domain(what: &'static str, value: f64, domain: impl Into<String>) -> Error {
    Error::OutOfDomain {
        what,
        value,
        domain: domain.into(),
    }
}
