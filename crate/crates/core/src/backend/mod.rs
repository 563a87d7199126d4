//! Language-model scoring behind a session interface.
//!
//! A [`ScoringSession`] owns a committed prefix that only grows. Candidates are
//! scored conditioned on that prefix; a backend may cache work for the prefix
//! between calls, but scores must equal those obtained by scoring the full
//! prefix from scratch.

pub mod http;
pub mod mock;
pub mod server;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{HttpBackend, HttpConfig};
pub use mock::{MockLm, MockMode};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("backend unreachable: {0}")]
    Connection(String),
    #[error("backend returned HTTP {status}: {message}")]
    Http { status: u16, message: String },
    #[error("malformed backend response: {0}")]
    Protocol(String),
    #[error("candidate {0:?} tokenizes to zero tokens")]
    Tokenization(String),
    #[error("no candidates to score")]
    NoCandidates,
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

impl BackendError {
    /// Transport failures and server-side errors are worth retrying.
    pub fn is_retriable(&self) -> bool {
        match self {
            BackendError::Connection(_) => true,
            BackendError::Http { status, .. } => *status >= 500 || *status == 429,
            _ => false,
        }
    }
}

/// Per-token log-probabilities for one candidate continuation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub candidate: String,
    pub tokens: Vec<String>,
    pub token_logprobs: Vec<f64>,
    pub mean_logprob: f64,
}

impl CandidateScore {
    /// The mean is always recomputed here, whatever the backend reports.
    pub fn new(
        candidate: impl Into<String>,
        tokens: Vec<String>,
        token_logprobs: Vec<f64>,
    ) -> Result<Self, BackendError> {
        let candidate = candidate.into();
        if token_logprobs.is_empty() {
            return Err(BackendError::Tokenization(candidate));
        }
        if !tokens.is_empty() && tokens.len() != token_logprobs.len() {
            return Err(BackendError::Protocol(format!(
                "{} tokens but {} logprobs for {candidate:?}",
                tokens.len(),
                token_logprobs.len()
            )));
        }
        if token_logprobs.iter().any(|l| l.is_nan() || *l > 0.0) {
            return Err(BackendError::Protocol(format!(
                "invalid logprob for {candidate:?}"
            )));
        }
        let mean_logprob = mean(&token_logprobs);
        Ok(Self {
            candidate,
            tokens,
            token_logprobs,
            mean_logprob,
        })
    }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Generation {
    pub text: String,
    pub truncated: bool,
}

/// A scoring backend. Implementations must be safe for concurrent sessions.
pub trait LanguageModel: Send + Sync {
    /// Human-readable identity recorded in run manifests.
    fn identity(&self) -> String;

    /// Log-probabilities of each candidate's tokens given `prefix`.
    fn score(&self, prefix: &str, candidates: &[String])
        -> Result<Vec<CandidateScore>, BackendError>;

    /// Greedy continuation of `prefix`, cut before `stop` or after
    /// `max_tokens` tokens.
    fn generate(&self, prefix: &str, stop: &str, max_tokens: usize)
        -> Result<Generation, BackendError>;

    /// Called once per opened session; backends that need a connection check
    /// override this.
    fn ping(&self) -> Result<(), BackendError> {
        Ok(())
    }
}

impl<T: LanguageModel + ?Sized> LanguageModel for std::sync::Arc<T> {
    fn identity(&self) -> String {
        (**self).identity()
    }
    fn score(&self, prefix: &str, candidates: &[String]) -> Result<Vec<CandidateScore>, BackendError> {
        (**self).score(prefix, candidates)
    }
    fn generate(&self, prefix: &str, stop: &str, max_tokens: usize) -> Result<Generation, BackendError> {
        (**self).generate(prefix, stop, max_tokens)
    }
    fn ping(&self) -> Result<(), BackendError> {
        (**self).ping()
    }
}

/// Append-only handle over a backend.
pub struct ScoringSession<'a> {
    model: &'a dyn LanguageModel,
    committed_prefix: String,
    append_count: usize,
}

pub fn open_session<'a>(
    model: &'a dyn LanguageModel,
    initial_prefix: &str,
) -> Result<ScoringSession<'a>, BackendError> {
    model.ping()?;
    Ok(ScoringSession {
        model,
        committed_prefix: initial_prefix.to_string(),
        append_count: 0,
    })
}

impl ScoringSession<'_> {
    pub fn committed_prefix(&self) -> &str {
        &self.committed_prefix
    }

    /// Number of `append` calls since the session was opened.
    pub fn append_count(&self) -> usize {
        self.append_count
    }

    pub fn append(&mut self, text: &str) {
        self.committed_prefix.push_str(text);
        self.append_count += 1;
    }

    pub fn score_candidates(&self, candidates: &[String]) -> Result<Vec<CandidateScore>, BackendError> {
        if candidates.is_empty() {
            return Err(BackendError::NoCandidates);
        }
        let scores = self.model.score(&self.committed_prefix, candidates)?;
        if scores.len() != candidates.len() {
            return Err(BackendError::Protocol(format!(
                "asked for {} scores, got {}",
                candidates.len(),
                scores.len()
            )));
        }
        Ok(scores)
    }

    pub fn generate_greedy(&self, stop: &str, max_tokens: usize) -> Result<Generation, BackendError> {
        if max_tokens == 0 {
            return Err(BackendError::InvalidRequest("max_tokens must be at least 1".into()));
        }
        self.model.generate(&self.committed_prefix, stop, max_tokens)
    }
}

/// Splits text into alphanumeric runs and single other characters. Used by
/// the mock backend; concatenating the tokens gives back the input.
pub fn simple_tokenize(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    for (i, c) in text.char_indices() {
        if c.is_alphanumeric() {
            start.get_or_insert(i);
        } else {
            if let Some(s) = start.take() {
                out.push(&text[s..i]);
            }
            out.push(&text[i..i + c.len_utf8()]);
        }
    }
    if let Some(s) = start {
        out.push(&text[s..]);
    }
    out
}
