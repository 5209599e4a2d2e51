use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("degenerate span: smallest singular value {smallest:e} is below {limit:e}")]
    DegenerateSpan { smallest: f64, limit: f64 },
    #[error("full-rank violation: {0}")]
    FullRankViolation(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("insufficient trials: {trials} trials cannot resolve {what}")]
    InsufficientTrials { trials: usize, what: String },
    #[error("sampling stalled after {proposals} proposals")]
    SamplingStalled { proposals: u64 },
    #[error("outside the small-power regime: {0}")]
    OutOfRegime(String),
    #[error("invalid slack: {0}")]
    InvalidSlack(String),
    #[error(
        "slack exhausted: re-estimated probability {probability} does not exceed epsilon {epsilon}; raise the slack"
    )]
    SlackExhausted { probability: f64, epsilon: f64 },
    #[error("degenerate estimate: {0}")]
    Degenerate(String),
    #[error("config: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Io(_) => 1,
            _ => 3,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
