//! The simple-QA black box: a uniform backend interface, a deterministic
//! fixture backend for offline runs, and a snippet-service backend with an
//! on-disk cache.

mod fixture;
mod snippet;

pub use fixture::FixtureBackend;
pub use snippet::{extract_answers, Snippet, SnippetBackend, SnippetClient, SnippetServiceConfig};

use thiserror::Error;

use crate::comptree::AnswerSet;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("quota exhausted: {0}")]
    Quota(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// A black-box answerer for simple questions.
///
/// Implementations must tolerate concurrent `answer` calls; when
/// `deterministic` is true, repeated calls with the same question must
/// return identical sets.
pub trait QaBackend: Send + Sync {
    fn name(&self) -> &str;
    fn deterministic(&self) -> bool;
    fn answer(&self, question: &str) -> Result<AnswerSet, BackendError>;
}
