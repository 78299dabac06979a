use thiserror::Error;

/// Errors raised by the spectral, dynamical and rate-function routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("incompatible mode sets: {0}")]
    BasisMismatch(String),

    #[error("grid of {n} points per axis aliases frequencies up to {kmax}; need n >= {need}")]
    Aliasing { n: usize, kmax: usize, need: usize },

    #[error("integration failed at step {step}: non-finite coefficient")]
    IntegrationFailure { step: usize },

    #[error("trajectory has no recorded noise increments")]
    MissingNoiseLog,

    #[error("infinite cost: constant-mode residual {magnitude:e} at node {node}")]
    InfiniteCost { node: usize, magnitude: f64 },

    #[error("time grids do not match: {0}")]
    GridMismatch(String),

    #[error("exponential moment diverges: eta * sigma^2 = {0} >= 1")]
    NotIntegrable(f64),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("malformed input: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
