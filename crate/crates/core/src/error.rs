use thiserror::Error;

pub type Result<T> = std::result::Result<T, UsfError>;

#[derive(Debug, Error)]
pub enum UsfError {
    #[error("degenerate collision kernel: all derived constants vanish")]
    DegenerateKernel,

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("no convergence: {0}")]
    Convergence(String),

    #[error("rejection sampler acceptance ratio {ratio:.4} is below 0.5 (alpha too large for first-order sampling)")]
    AcceptanceTooLow { ratio: f64 },

    #[error("monomial degree {0} exceeds the supported maximum of 4")]
    UnsupportedDegree(u32),

    #[error("time {t} lies outside the sampled range [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },

    #[error("source tail does not decay: {0}")]
    NonDecayingTail(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("non-finite velocity at step {step} (particle {index}): {detail}")]
    NonFinite {
        step: u64,
        index: usize,
        detail: String,
    },

    #[error("eigensystem check failed: {0}")]
    Spectrum(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
