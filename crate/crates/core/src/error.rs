use thiserror::Error;

use crate::regression::FofrModel;

/// Errors raised by the fitting pipeline.
#[derive(Debug, Error)]
pub enum FofrError {
    #[error("point {point} lies outside the domain [{lower}, {upper}]")]
    Domain { point: f64, lower: f64, upper: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("rank deficient system: {0}")]
    Rank(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("sample size too small: {0}")]
    SampleSize(String),

    #[error("selection failed: {0}")]
    Selection(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("criterion not applicable: {0}")]
    Inapplicable(String),

    #[error("MPL iteration did not converge after {iterations} iterations (relative change {change:e})")]
    Convergence {
        iterations: usize,
        change: f64,
        last: Box<FofrModel>,
    },

    #[error("bootstrap unstable: {skipped} of {requested} replicates failed to refit")]
    Instability { skipped: usize, requested: usize },
}

impl FofrError {
    /// True for failures caused by a singular or near-singular linear system.
    pub fn is_rank(&self) -> bool {
        matches!(self, FofrError::Rank(_))
    }
}

pub type Result<T> = std::result::Result<T, FofrError>;
