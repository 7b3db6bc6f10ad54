//! Crate-wide error type.

use std::time::Duration;

/// Errors surfaced by the memory engine and its backends.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Input text was empty or whitespace-only; nothing to encode.
    #[error("text is empty or whitespace-only")]
    EmptyText,

    /// Attempted to insert an id that already exists in a vector index.
    #[error("duplicate id in index: {0}")]
    DuplicateId(String),

    /// Vector length does not match the index/engine dimension.
    #[error("embedding dimension mismatch: expected {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },

    /// Referenced an id that is not present.
    #[error("unknown id: {0}")]
    UnknownId(String),

    /// A turn with this id was already ingested in the conversation.
    #[error("duplicate turn id: {0}")]
    DuplicateTurnId(String),

    /// A turn's timestamp went backwards relative to the stream so far.
    #[error("turn {turn_id} is out of order: timestamp precedes the previous turn")]
    OutOfOrderTurn { turn_id: String },

    /// Remote HTTP service could not be reached or returned an error status.
    #[error("remote service unavailable: {0}")]
    RemoteUnavailable(String),

    /// Remote call exceeded its deadline.
    #[error("remote call timed out after {0:?}")]
    Timeout(Duration),

    /// An LLM call failed after exhausting retries.
    #[error("LLM call failed: {0}")]
    LlmFailure(String),

    /// The LLM responded, but the output did not match the expected structure.
    #[error("malformed LLM output: {0}")]
    MalformedLlmOutput(String),

    /// Ledger lookup for a conversation that was never ingested.
    #[error("unknown conversation: {0}")]
    UnknownConversation(String),

    /// Dataset file could not be parsed; location is file:line or a record path.
    #[error("parse error at {location}: {message}")]
    ParseError { location: String, message: String },

    /// Dataset format name is not one of the supported loaders.
    #[error("unsupported dataset format: {0}")]
    UnsupportedFormat(String),

    /// Filesystem failure during snapshot/restore or dataset loading.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// Snapshot directory was written by an incompatible format version.
    #[error("snapshot version mismatch: expected {expected}, found {found}")]
    VersionMismatch { expected: u32, found: u32 },

    /// Configuration values violate an invariant (bad dim, bad thresholds, ...).
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::ParseError {
            location: location.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
