use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NipError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parameter outside its domain: {0}")]
    Domain(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("singular potential: {0}")]
    SingularPotential(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("ill-conditioned map (condition number {condition:.3e}): {advice}")]
    Conditioning { condition: f64, advice: String },

    #[error("not a metric: {0}")]
    NotAMetric(String),

    #[error("derivative unavailable: {0}")]
    Derivative(String),

    #[error("norm drift {drift:.3e} exceeded {threshold:.1e} at step {step} (t = {t}); last stable time {last_stable_t}")]
    Instability {
        step: usize,
        t: f64,
        last_stable_t: f64,
        drift: f64,
        threshold: f64,
    },

    #[error("degenerate state: {0}")]
    DegenerateState(String),
}

pub type Result<T> = std::result::Result<T, NipError>;
