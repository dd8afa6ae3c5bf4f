use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor shapes do not line up.
    #[error("dimension mismatch in {context}: {detail}")]
    Dimension { context: String, detail: String },

    /// An API was called in a state that does not allow it.
    #[error("usage error: {0}")]
    Usage(String),

    /// Input values violate a documented contract.
    #[error("validation error: {0}")]
    Validation(String),

    /// A value became NaN or infinite.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// A metric is undefined for the given input (e.g. a single class).
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// Malformed input data (CSV rows, model files, vocabularies).
    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn dim(context: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Dimension {
            context: context.into(),
            detail: detail.into(),
        }
    }
}
