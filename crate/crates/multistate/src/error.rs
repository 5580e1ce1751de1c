use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors surfaced while validating inputs, fitting models, or computing
/// derived quantities.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid distribution parameter: {0}")]
    InvalidParameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid model structure: {0}")]
    Structure(String),

    #[error("invalid dataset: {0}")]
    Data(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("likelihood not finite for observation `{subject}` (from `{from}`, t={time}): {detail}")]
    LikelihoodDomain {
        subject: String,
        from: String,
        time: f64,
        detail: String,
    },

    #[error("optimizer failed to converge after {iterations} iterations (|grad|={grad_norm:.3e})")]
    NonConvergence { iterations: usize, grad_norm: f64 },

    #[error("EM did not converge after {iterations} iterations; trace: {trace:?}")]
    EmNonConvergence { iterations: usize, trace: Vec<f64> },

    #[error("covariance matrix is not positive semi-definite and could not be repaired")]
    BadCovariance,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 for usage/config problems, 1 for
    /// numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Structure(_) | Error::Data(_) | Error::Io(_)
            | Error::Json(_) | Error::Csv(_) => 2,
            _ => 1,
        }
    }
}
