//! JSON-over-HTTP scoring client.
//!
//! `POST {base}/v1/score` with `{"prefix", "candidates"}` returns
//! `{"scores": [{"tokens", "logprobs"}]}`; `POST {base}/v1/generate` with
//! `{"prefix", "max_tokens", "stop"}` returns `{"text", "truncated"}`. Errors
//! come back as 4xx/5xx with `{"error"}`.

use std::net::TcpStream;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{BackendError, CandidateScore, Generation, LanguageModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpConfig {
    pub base_url: String,
    pub timeout: Duration,
    pub retries: u32,
    pub retry_backoff: Duration,
}

impl HttpConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            timeout: Duration::from_secs(60),
            retries: 3,
            retry_backoff: Duration::from_millis(200),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub prefix: String,
    pub candidates: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct WireScore {
    pub tokens: Vec<String>,
    pub logprobs: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub scores: Vec<WireScore>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GenerateRequest {
    pub prefix: String,
    pub max_tokens: usize,
    pub stop: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

pub struct HttpBackend {
    config: HttpConfig,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(config.timeout).build();
        Self { config, agent }
    }

    /// Like [`HttpBackend::new`], but fails fast if nothing listens at the
    /// base URL.
    pub fn connect(config: HttpConfig) -> Result<Self, BackendError> {
        let url = url::Url::parse(&config.base_url)
            .map_err(|e| BackendError::Connection(format!("{}: {e}", config.base_url)))?;
        let addrs = url
            .socket_addrs(|| Some(80))
            .map_err(|e| BackendError::Connection(format!("{}: {e}", config.base_url)))?;
        let reachable = addrs
            .iter()
            .any(|a| TcpStream::connect_timeout(a, config.timeout.min(Duration::from_secs(5))).is_ok());
        if !reachable {
            return Err(BackendError::Connection(format!(
                "nothing listening at {}",
                config.base_url
            )));
        }
        Ok(Self::new(config))
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    fn post<Req: Serialize, Resp: for<'de> Deserialize<'de>>(
        &self,
        path: &str,
        body: &Req,
    ) -> Result<Resp, BackendError> {
        let url = format!("{}{path}", self.config.base_url);
        let mut attempt = 0;
        loop {
            let result = match self.agent.post(&url).send_json(body) {
                Ok(resp) => resp
                    .into_json::<Resp>()
                    .map_err(|e| BackendError::Protocol(e.to_string())),
                Err(ureq::Error::Status(status, resp)) => {
                    let message = resp
                        .into_json::<ErrorBody>()
                        .map(|b| b.error)
                        .unwrap_or_else(|_| "no error body".into());
                    Err(BackendError::Http { status, message })
                }
                Err(ureq::Error::Transport(t)) => Err(BackendError::Connection(t.to_string())),
            };
            match result {
                Err(e) if e.is_retriable() && attempt < self.config.retries => {
                    attempt += 1;
                    log::warn!("{url}: {e}; retry {attempt}/{}", self.config.retries);
                    thread::sleep(self.config.retry_backoff * attempt);
                }
                other => return other,
            }
        }
    }
}

impl LanguageModel for HttpBackend {
    fn identity(&self) -> String {
        format!("http({})", self.config.base_url)
    }

    fn score(&self, prefix: &str, candidates: &[String]) -> Result<Vec<CandidateScore>, BackendError> {
        if candidates.is_empty() {
            return Err(BackendError::NoCandidates);
        }
        let req = ScoreRequest {
            prefix: prefix.to_string(),
            candidates: candidates.to_vec(),
        };
        let resp: ScoreResponse = self.post("/v1/score", &req)?;
        if resp.scores.len() != candidates.len() {
            return Err(BackendError::Protocol(format!(
                "asked for {} scores, got {}",
                candidates.len(),
                resp.scores.len()
            )));
        }
        candidates
            .iter()
            .zip(resp.scores)
            .map(|(c, s)| CandidateScore::new(c.clone(), s.tokens, s.logprobs))
            .collect()
    }

    fn generate(&self, prefix: &str, stop: &str, max_tokens: usize) -> Result<Generation, BackendError> {
        let req = GenerateRequest {
            prefix: prefix.to_string(),
            max_tokens,
            stop: stop.to_string(),
        };
        self.post("/v1/generate", &req)
    }
}
