use thiserror::Error;

/// Command failure, mapped onto the process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("invariant violation: {0}")]
    Invariant(String),
    #[error("budget exceeded: need {required}, budget {budget}")]
    Budget { required: u128, budget: u128 },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Parse { .. } | CliError::Io { .. } => 2,
            CliError::Invariant(_) => 3,
            CliError::Budget { .. } => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "ConfigError",
            CliError::Parse { .. } => "ParseError",
            CliError::Invariant(_) => "InvariantViolation",
            CliError::Budget { .. } => "SizeBudgetExceeded",
            CliError::Io { .. } => "IoError",
        }
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

impl From<corrdyn::Error> for CliError {
    fn from(e: corrdyn::Error) -> Self {
        use corrdyn::Error as E;
        match e {
            E::Parse { offset, message } => CliError::Parse { offset, message },
            E::SizeBudgetExceeded { required, budget } => CliError::Budget { required, budget },
            E::InvalidInput(m) => CliError::Config(m),
            E::GridMismatch => CliError::Config(e.to_string()),
            other => CliError::Invariant(other.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
