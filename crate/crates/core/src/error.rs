use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid topology: {0}")]
    Topology(String),

    #[error(
        "interarrival solver did not converge for M = {scale}: last iterate beta = {beta}, gamma = {gamma}, \
         mass residual = {mass_residual:e}, mean residual = {mean_residual:e}"
    )]
    SolverDiverged {
        scale: f64,
        beta: f64,
        gamma: f64,
        mass_residual: f64,
        mean_residual: f64,
    },

    #[error("unsorted input at index {0}")]
    Unsorted(usize),

    #[error("run truncated: {0}")]
    Truncated(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
