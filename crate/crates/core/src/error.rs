use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Top-level error for engine operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{kind} not found: {id}")]
    NotFound { kind: &'static str, id: String },

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("duplicate {kind}: {id}")]
    Duplicate { kind: &'static str, id: String },

    #[error("project {0} already has an update run in flight")]
    Busy(String),

    #[error("question {0} has never been answered")]
    NoBaseline(String),

    #[error(transparent)]
    Document(#[from] DocumentError),

    #[error(transparent)]
    Provider(#[from] ProviderError),

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error(transparent)]
    Store(#[from] StoreError),
}

impl Error {
    pub(crate) fn not_found(kind: &'static str, id: impl Into<String>) -> Self {
        Error::NotFound {
            kind,
            id: id.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum DocumentError {
    #[error("malformed address for {kind} source: {address:?}")]
    MalformedAddress { kind: &'static str, address: String },

    #[error("source unreachable ({address}): {reason}")]
    Unreachable { address: String, reason: String },

    #[error("permission denied reading {0}")]
    PermissionDenied(String),

    #[error("unsupported content type: {0}")]
    UnsupportedContent(String),

    #[error("document bytes are not valid UTF-8")]
    Undecodable,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProviderError {
    /// Timeouts, rate limits, 5xx. Eligible for retry.
    #[error("transient provider failure: {0}")]
    Transient(String),

    #[error("provider rejected credentials: {0}")]
    Auth(String),

    #[error("no replay fixture for {kind} request {key}")]
    MissingFixture { kind: &'static str, key: String },

    #[error("provider gave up after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: String },

    #[error("provider error: {0}")]
    Other(String),
}

impl ProviderError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, ProviderError::Transient(_))
    }
}

/// Provider output that does not match the expected structure.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("malformed output: {0}")]
    Malformed(String),

    #[error("output violates schema: {0}")]
    Schema(String),
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}
