//! Completion port used by the parser and matcher.
//!
//! Three interchangeable backends sit behind [`CompletionBackend`]:
//! [`RemoteBackend`] talks to an OpenAI-compatible endpoint,
//! [`FixtureBackend`] answers from a hand-written lookup table, and
//! [`Cassette`] records or replays real traffic. [`Scripted`] and
//! [`Counting`] exist for tests.

mod cassette;
mod fixture;
mod remote;
mod scripted;

use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cassette::{Cassette, CassetteEntry, CassetteMode};
pub use fixture::{FixtureBackend, FixtureEntry};
pub use remote::{ApiStyle, RemoteBackend, RemoteConfig, RetryPolicy, API_KEY_ENV};
pub use scripted::{Counting, Failing, Scripted};

/// Which engine role issued a request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Parse,
    Match,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Parse => "parse",
            Role::Match => "match",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub max_tokens: u32,
    pub temperature: f32,
    pub stop_sequences: Vec<String>,
    pub tag: Role,
    /// The input the prompt was built from (the utterance for parsing, the
    /// rendered predicate for matching). Fixture tables are keyed on it so
    /// they survive prompt template edits.
    pub subject: String,
}

impl CompletionRequest {
    /// Engine requests always decode greedily.
    pub fn new(tag: Role, subject: impl Into<String>, prompt: impl Into<String>) -> Self {
        Self {
            prompt: prompt.into(),
            max_tokens: 256,
            temperature: 0.0,
            stop_sequences: Vec::new(),
            tag,
            subject: subject.into(),
        }
    }

    pub fn with_max_tokens(mut self, max_tokens: u32) -> Self {
        self.max_tokens = max_tokens;
        self
    }

    pub fn with_stop(mut self, stop: impl Into<String>) -> Self {
        self.stop_sequences.push(stop.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub text: String,
    pub latency_ms: u64,
    pub backend_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LlmError {
    #[error("transport error after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("rate limited (retry after {retry_after:?})")]
    RateLimited { retry_after: Option<Duration> },
    #[error("endpoint returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed endpoint response: {0}")]
    Decode(String),
    #[error("no cassette entry for {tag} request {fingerprint}")]
    ReplayMiss { fingerprint: String, tag: Role },
    #[error("no fixture entry for {tag} request {subject:?}")]
    FixtureMiss { tag: Role, subject: String },
    #[error("scripted backend exhausted")]
    Exhausted,
    #[error("injected failure: {0}")]
    Injected(String),
    #[error("{0}")]
    Io(String),
}

pub trait CompletionBackend: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, LlmError>;

    fn backend_id(&self) -> &str;
}

impl<B: CompletionBackend + ?Sized> CompletionBackend for std::sync::Arc<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, LlmError> {
        (**self).complete(request)
    }

    fn backend_id(&self) -> &str {
        (**self).backend_id()
    }
}

/// Stable content hash of `(tag, prompt)`: lowercase hex SHA-256.
pub fn fingerprint(request: &CompletionRequest) -> String {
    fingerprint_parts(request.tag, &request.prompt)
}

pub(crate) fn fingerprint_parts(tag: Role, prompt: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(tag.as_str().as_bytes());
    hasher.update([0u8]);
    hasher.update(prompt.as_bytes());
    hex::encode(hasher.finalize())
}

pub(crate) fn response(text: &str, started: std::time::Instant, id: &str) -> CompletionResponse {
    CompletionResponse {
        text: text.trim_end().to_string(),
        latency_ms: started.elapsed().as_millis() as u64,
        backend_id: id.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fingerprints() {
        let a = CompletionRequest::new(Role::Parse, "x", "open your hand");
        assert_eq!(fingerprint(&a), fingerprint(&a.clone()));
        let b = CompletionRequest::new(Role::Parse, "x", "open your hand.");
        assert_ne!(fingerprint(&a), fingerprint(&b));
        let c = CompletionRequest::new(Role::Match, "x", "open your hand");
        assert_ne!(fingerprint(&a), fingerprint(&c));
        // subject and decoding parameters are not part of the key
        let d = CompletionRequest::new(Role::Parse, "y", "open your hand").with_max_tokens(9);
        assert_eq!(fingerprint(&a), fingerprint(&d));
    }

    #[test]
    fn fingerprint_is_platform_stable() {
        let req = CompletionRequest::new(Role::Parse, "", "abc");
        // sha256("parse\0abc")
        assert_eq!(
            fingerprint(&req),
            "071d298e67c57d8062978f20d71b6c9e62be71185bf41d744584e14a1d2bfd18"
        );
    }

    #[test]
    fn engine_requests_are_greedy() {
        assert_eq!(CompletionRequest::new(Role::Match, "", "").temperature, 0.0);
    }
}
