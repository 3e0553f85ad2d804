use thiserror::Error;

/// Process exit statuses.
pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_DEGENERATE: i32 = 3;
pub const EXIT_WEAK_INSTRUMENT: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    /// Malformed data file, located by 1-based line and column name.
    #[error("{source_name}: line {line}, column `{column}`: {message}")]
    Input {
        source_name: String,
        line: u64,
        column: String,
        message: String,
    },
    #[error("{0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Analysis(#[from] varbound::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Analysis(e) => match e {
                varbound::Error::DegenerateDesign(_) | varbound::Error::Regression(_) => EXIT_DEGENERATE,
                varbound::Error::WeakInstrument(_) => EXIT_WEAK_INSTRUMENT,
                varbound::Error::Domain(_) | varbound::Error::AssumptionViolation(_) => EXIT_INPUT,
            },
            _ => EXIT_INPUT,
        }
    }
}
