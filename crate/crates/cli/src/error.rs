use std::fmt;

/// Command failure, classified by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad configuration or arguments, or inputs violating a contract.
    Validation(String),
    /// Unreadable or malformed input files.
    Data(String),
    /// A bug or numerical breakdown.
    Internal(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub const OK: i32 = 0;

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Data(_) => 3,
            CliError::Internal(_) => 4,
        }
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        CliError::Validation(msg.into())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "invalid input: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<cmmd_core::Error> for CliError {
    fn from(e: cmmd_core::Error) -> Self {
        use cmmd_core::Error as E;
        let msg = e.to_string();
        match e {
            E::Validation(m) => CliError::Validation(m),
            E::Data(m) => CliError::Data(m),
            E::Dimension { .. } | E::UndefinedMetric(_) => CliError::Validation(msg),
            E::Io(_) | E::Csv(_) | E::Json(_) => CliError::Data(msg),
            E::Usage(_) | E::NonFinite(_) => CliError::Internal(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Internal(format!("serialising output: {e}"))
    }
}
