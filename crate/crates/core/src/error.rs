use thiserror::Error;

/// Errors shared by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} out of range: {value} (limit {limit})")]
    Range {
        what: &'static str,
        value: usize,
        limit: usize,
    },
    #[error("invalid tree: {0}")]
    InvalidTree(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("{0}")]
    NotSubset(String),
    #[error("budget exceeded in {what}: limit {limit}, estimated cost {estimate}")]
    Budget {
        what: String,
        limit: u64,
        estimate: String,
    },
    #[error("undecidable at the {bits}-bit precision cap: {what}")]
    Undecidable { bits: u32, what: String },
    #[error("unresolved leaves: {}", .0.join(", "))]
    Unresolved(Vec<String>),
    #[error("not exactly representable: {0}")]
    NotExact(String),
    #[error("insufficient height in {stage}: need {required}")]
    InsufficientHeight { stage: String, required: usize },
    #[error("verification failed: {0}")]
    Verification(String),
    /// A construction step whose guarantee needs parameters the caller relaxed.
    #[error("stalled: {0}")]
    Stalled(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn pre(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }

    pub(crate) fn budget(what: impl Into<String>, limit: u64, estimate: impl ToString) -> Self {
        Error::Budget {
            what: what.into(),
            limit,
            estimate: estimate.to_string(),
        }
    }

    /// Process exit code used by the CLI for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Verification(_) | Error::Stalled(_) => 1,
            Error::Budget { .. } => 3,
            Error::Undecidable { .. } => 4,
            _ => 2,
        }
    }
}
