//! Experiment runner for truncated-cusp Ricci flow: strict TOML configs,
//! lockstep sweeps over truncation levels, barrier and comparison checks,
//! and CSV output.

// `!(a > b)` is used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod fit;
pub mod identities;
pub mod simulate;

pub use config::{parse_config, Check, ExperimentConfig};
pub use simulate::{simulate, write_outputs, Outcome};

/// Fallback output directory when neither `--out` nor `output_dir` is set.
pub const OUT_ENV: &str = "CUSPFLOW_OUT";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("solver failure: {0}")]
    Solver(cuspflow::Error),
    #[error("{0}")]
    Numerics(#[from] cuspflow::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    /// 2 for bad input, 3 for anything that went wrong while computing.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerics(cuspflow::Error::InvalidArgument(_)) => 2,
            _ => 3,
        }
    }
}

pub mod exit {
    pub const SUCCESS: u8 = 0;
    pub const CHECK_FAILURE: u8 = 1;
    pub const CONFIG_ERROR: u8 = 2;
    pub const SOLVER_FAILURE: u8 = 3;
}
