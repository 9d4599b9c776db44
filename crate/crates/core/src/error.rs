//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("kernel is not smooth enough: {0}")]
    NonSmoothKernel(String),
    #[error("degenerate kernel: all discrete weights vanish for N = {n}")]
    DegenerateKernel { n: usize },
    #[error("index {index} out of range for {len} particles")]
    Index { index: usize, len: usize },
    #[error("config error: {0}")]
    Config(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("time step {dt} exceeds the stability bound 1")]
    StepTooLarge { dt: f64 },
    #[error("empty density: total mass is zero")]
    EmptyDensity,
}

pub type Result<T> = std::result::Result<T, Error>;
