use thiserror::Error;

/// Errors produced by the estimation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("t = {t} is outside the signal domain [0, {end}]")]
    Domain { t: f64, end: f64 },

    #[error("invalid signal: {0}")]
    InvalidSignal(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("integration failed at t = {t}: {reason}")]
    Integration { t: f64, reason: String },

    #[error("training diverged at epoch {epoch} (loss = {loss})")]
    Training { epoch: usize, loss: f64 },

    #[error("Jacobian self-test failed for {which}[{row}][{col}]: analytic {analytic}, finite difference {numeric}")]
    JacobianMismatch {
        which: &'static str,
        row: usize,
        col: usize,
        analytic: f64,
        numeric: f64,
    },

    #[error("model `{0}` is already registered")]
    DuplicateModel(String),

    #[error("unknown model `{name}`; registered models: {known}")]
    UnknownModel { name: String, known: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
