use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] hades_core::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, BenchError>;

impl BenchError {
    /// 1 for anything the user can fix in the config, 2 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        use hades_core::Error as E;
        match self {
            BenchError::Config(_) => 1,
            BenchError::Core(
                E::Config(_) | E::UnknownModel { .. } | E::InvalidSignal(_) | E::Dimension(_) | E::Domain { .. },
            ) => 1,
            _ => 2,
        }
    }
}
