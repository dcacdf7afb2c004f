use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("ParseError: {0}")]
    Parse(String),

    #[error("ValidationError: {field}: {message}")]
    Validation { field: String, message: String },

    #[error("InfeasibleMarket: {0}")]
    InfeasibleMarket(String),

    #[error("SolverFailure: {0}")]
    SolverFailure(String),

    #[error("BigMViolation: {pairs} complementarity pair(s) at their bound after {retries} retries")]
    BigMViolation { pairs: usize, retries: usize },

    #[error("ConsistencyFailure: {stage} embedded {embedded:.6} vs re-solved {resolved:.6}")]
    ConsistencyFailure {
        stage: String,
        embedded: f64,
        resolved: f64,
    },

    #[error("IncompleteTable: missing coalition {0}")]
    IncompleteTable(String),

    #[error("ZeroGrandValue: grand coalition value is zero, shares are undefined")]
    ZeroGrandValue,

    #[error("IterationLimit: {iterations} iterations, last gap {gap:.6}")]
    IterationLimit { iterations: usize, gap: f64 },

    #[error("DegenerateStage: {0}")]
    DegenerateStage(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
