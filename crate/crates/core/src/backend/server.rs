//! Serves any [`LanguageModel`] over the scoring protocol.

use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::{self, JoinHandle};

use serde_json::{json, Value};
use tiny_http::{Header, Method, Response, Server};

use super::http::{GenerateRequest, ScoreRequest, ScoreResponse, WireScore};
use super::{BackendError, LanguageModel};

/// Maps one request to `(status, json body)`.
pub fn handle(model: &dyn LanguageModel, method: &str, path: &str, body: &str) -> (u16, Value) {
    if method != "POST" {
        return (405, json!({"error": format!("{method} not allowed")}));
    }
    let result = match path {
        "/v1/score" => serde_json::from_str::<ScoreRequest>(body)
            .map_err(|e| (400, e.to_string()))
            .and_then(|req| {
                model
                    .score(&req.prefix, &req.candidates)
                    .map_err(|e| (status_for(&e), e.to_string()))
            })
            .map(|scores| {
                let resp = ScoreResponse {
                    scores: scores
                        .into_iter()
                        .map(|s| WireScore {
                            tokens: s.tokens,
                            logprobs: s.token_logprobs,
                        })
                        .collect(),
                };
                serde_json::to_value(resp).expect("serializable")
            }),
        "/v1/generate" => serde_json::from_str::<GenerateRequest>(body)
            .map_err(|e| (400, e.to_string()))
            .and_then(|req| {
                model
                    .generate(&req.prefix, &req.stop, req.max_tokens)
                    .map_err(|e| (status_for(&e), e.to_string()))
            })
            .map(|g| serde_json::to_value(g).expect("serializable")),
        other => Err((404, format!("no route {other}"))),
    };
    match result {
        Ok(v) => (200, v),
        Err((status, message)) => (status, json!({ "error": message })),
    }
}

fn status_for(e: &BackendError) -> u16 {
    match e {
        BackendError::Tokenization(_) | BackendError::NoCandidates | BackendError::InvalidRequest(_) => 400,
        BackendError::Http { status, .. } => *status,
        BackendError::Connection(_) => 502,
        BackendError::Protocol(_) => 500,
    }
}

pub struct ServerHandle {
    server: Arc<Server>,
    addr: SocketAddr,
    workers: Vec<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Blocks until the workers exit (they only do after `shutdown`).
    pub fn join(mut self) {
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        for _ in 0..self.workers.len() {
            self.server.unblock();
        }
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Binds `addr` (use port 0 for an ephemeral port) and serves with `workers`
/// threads.
pub fn serve(
    model: Arc<dyn LanguageModel>,
    addr: &str,
    workers: usize,
) -> Result<ServerHandle, BackendError> {
    let server = Arc::new(Server::http(addr).map_err(|e| BackendError::Connection(e.to_string()))?);
    let bound = server
        .server_addr()
        .to_ip()
        .ok_or_else(|| BackendError::Connection("not an IP listener".into()))?;
    let workers = (0..workers.max(1))
        .map(|_| {
            let server = Arc::clone(&server);
            let model = Arc::clone(&model);
            thread::spawn(move || {
                while let Ok(mut req) = server.recv() {
                    let mut body = String::new();
                    let (status, value) = match req.as_reader().read_to_string(&mut body) {
                        Ok(_) => {
                            let method = match req.method() {
                                Method::Post => "POST",
                                Method::Get => "GET",
                                _ => "OTHER",
                            };
                            handle(model.as_ref(), method, req.url(), &body)
                        }
                        Err(e) => (400, json!({"error": format!("unreadable body: {e}")})),
                    };
                    let response = Response::from_string(value.to_string())
                        .with_status_code(status)
                        .with_header(
                            Header::from_bytes("Content-Type", "application/json").expect("valid header"),
                        );
                    if let Err(e) = req.respond(response) {
                        log::warn!("failed to send response: {e}");
                    }
                }
            })
        })
        .collect();
    Ok(ServerHandle {
        server,
        addr: bound,
        workers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{HttpBackend, HttpConfig, MockLm};
    use crate::corpus::WordLexicon;
    use crate::labelspace::{original_labels, Task};

    fn mock() -> MockLm {
        let mut lex = WordLexicon::default();
        lex.insert("dog", "NOUN");
        MockLm::new(lex, original_labels(Task::Pos))
    }

    #[test]
    fn handler_routes_and_errors() {
        let m = mock();
        let (s, v) = handle(&m, "POST", "/v1/score", r#"{"prefix":"Tagged: dog/","candidates":["NOUN","VERB"]}"#);
        assert_eq!(s, 200);
        assert_eq!(v["scores"].as_array().unwrap().len(), 2);
        assert_eq!(handle(&m, "POST", "/v1/score", "{").0, 400);
        assert_eq!(handle(&m, "POST", "/v1/score", r#"{"prefix":"","candidates":[""]}"#).0, 400);
        assert_eq!(handle(&m, "POST", "/v1/nope", "{}").0, 404);
        assert_eq!(handle(&m, "GET", "/v1/score", "").0, 405);
        let (s, v) = handle(&m, "POST", "/v1/generate", r#"{"prefix":"x","max_tokens":0,"stop":"\n"}"#);
        assert_eq!(s, 400);
        assert!(v["error"].is_string());
    }

    #[test]
    fn client_server_roundtrip() {
        let m = mock();
        let handle = serve(Arc::new(m.clone()), "127.0.0.1:0", 2).unwrap();
        let client = HttpBackend::connect(HttpConfig::new(handle.base_url())).unwrap();
        let c: Vec<String> = m.labels().surfaces().to_vec();
        let prefix = "Context: dog\nTagged: dog/";
        assert_eq!(client.score(prefix, &c).unwrap(), m.score(prefix, &c).unwrap());
        assert_eq!(
            client.generate("Context: dog\nTagged:", "\n", 50).unwrap(),
            m.generate("Context: dog\nTagged:", "\n", 50).unwrap()
        );
        let err = client.score(prefix, &["".to_string()]).unwrap_err();
        assert!(matches!(err, BackendError::Http { status: 400, .. }), "{err}");
        handle.shutdown();
    }

    #[test]
    fn connect_refused() {
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        drop(listener);
        let mut cfg = HttpConfig::new(format!("http://{addr}"));
        cfg.retries = 0;
        assert!(matches!(HttpBackend::connect(cfg.clone()), Err(BackendError::Connection(_))));
        let err = HttpBackend::new(cfg).score("x", &["a".into()]).unwrap_err();
        assert!(matches!(err, BackendError::Connection(_)));
    }
}
