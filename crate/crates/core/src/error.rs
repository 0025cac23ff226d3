use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("resource limit: {0}")]
    Resource(String),
    #[error("quadrature did not converge: {what} (estimate {estimate:e}, error {error:e}, {evals} evaluations)")]
    Numeric {
        what: String,
        estimate: f64,
        error: f64,
        evals: usize,
    },
    #[error("calibration undetermined: {0}")]
    Calibration(String),
    #[error("invalid config:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
