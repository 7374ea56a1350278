use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("profiles live on different grids")]
    GridMismatch,

    /// An exponent difference exceeded the floating point range.
    #[error("overflow: exponent {exponent:.3} exceeds the representable range (delta too small)")]
    Overflow { exponent: f64 },

    #[error("no sign change of g1 - eps on [{lo:e}, {hi:e}] (residuals {f_lo:e}, {f_hi:e})")]
    BracketFailure { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },

    #[error("iteration is not contracting: {context}; ratios {ratios:?}")]
    NonContraction { context: String, ratios: Vec<f64> },

    #[error("no convergence after {iterations} iterations (last change {last_change:e})")]
    MaxIterExceeded { iterations: usize, last_change: f64 },

    #[error("tail beyond z_max dominates: error bar {bar:e} exceeds {limit:e}")]
    TailDominance { bar: f64, limit: f64 },

    #[error("profile is not positive at z = {z} inside the fit window")]
    NonPositiveTail { z: f64 },

    #[error("finite differences are inconsistent: {0}")]
    StepBreakdown(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
