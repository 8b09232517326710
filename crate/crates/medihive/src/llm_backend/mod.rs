//! Client for OpenAI-compatible chat-completion endpoints: request
//! construction, bounded retry with backoff, and structured parsing of model
//! output.
//!
//! Requests POST to `<base_url>/chat/completions` with a bearer token taken
//! from the `HIVE_API_KEY` environment variable when present.

mod parse;
pub mod prompts;

pub use parse::{parse_agent_output, parse_debate_output, parse_role_output, ParseError};

use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

/// Environment variable holding the bearer token.
pub const API_KEY_ENV: &str = "HIVE_API_KEY";

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("request timed out")]
    Timeout,
    #[error("transport error: {0}")]
    Transport(String),
    #[error("endpoint returned HTTP {0}")]
    HttpStatus(u16),
    #[error("retries exhausted after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: String },
    #[error("malformed completion response: {0}")]
    MalformedResponse(String),
}

impl LlmError {
    fn retryable(&self) -> bool {
        match self {
            LlmError::Timeout | LlmError::Transport(_) => true,
            LlmError::HttpStatus(code) => *code >= 500,
            _ => false,
        }
    }
}

/// Endpoint and policy configuration for one chat-completion deployment.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_max_attempts")]
    pub max_attempts: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    /// Cap on in-flight requests against this endpoint; `None` = unlimited.
    #[serde(default)]
    pub max_concurrent_requests: Option<usize>,
    /// Optional directory of prompt template overrides.
    #[serde(default)]
    pub templates_dir: Option<String>,
}

fn default_max_tokens() -> u32 {
    1024
}
fn default_timeout_secs() -> u64 {
    120
}
fn default_max_attempts() -> u32 {
    3
}
fn default_backoff_ms() -> u64 {
    250
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        EndpointConfig {
            base_url: base_url.into(),
            model: model.into(),
            temperature: 0.0,
            max_tokens: default_max_tokens(),
            timeout_secs: default_timeout_secs(),
            max_attempts: default_max_attempts(),
            backoff_ms: default_backoff_ms(),
            max_concurrent_requests: None,
            templates_dir: None,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.temperature < 0.0 || !self.temperature.is_finite() {
            return Err(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            ));
        }
        if self.max_attempts < 1 {
            return Err("max_attempts must be >= 1".into());
        }
        if self.base_url.trim().is_empty() {
            return Err("base_url must not be empty".into());
        }
        Ok(())
    }
}

/// One chat completion call: a system message plus a user message in, raw
/// model text out. Implemented by the HTTP client and by test doubles.
pub trait ChatCompletion: Send {
    fn complete(&mut self, system: &str, user: &str) -> Result<String, LlmError>;
}

/// Counting semaphore limiting in-flight requests per endpoint.
#[derive(Debug)]
struct RequestGate {
    state: Mutex<usize>,
    available: Condvar,
    limit: usize,
}

impl RequestGate {
    fn new(limit: usize) -> Self {
        RequestGate {
            state: Mutex::new(0),
            available: Condvar::new(),
            limit,
        }
    }

    fn acquire(&self) {
        let mut in_flight = self.state.lock().expect("gate poisoned");
        while *in_flight >= self.limit {
            in_flight = self.available.wait(in_flight).expect("gate poisoned");
        }
        *in_flight += 1;
    }

    fn release(&self) {
        *self.state.lock().expect("gate poisoned") -= 1;
        self.available.notify_one();
    }
}

/// Blocking HTTP client with the endpoint's retry policy. Stateless per
/// request; cloning shares the connection pool and the request gate.
#[derive(Clone)]
pub struct LlmClient {
    config: EndpointConfig,
    http: reqwest::blocking::Client,
    gate: Option<Arc<RequestGate>>,
    api_key: Option<String>,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: Option<String>,
}

impl LlmClient {
    pub fn new(config: EndpointConfig) -> Result<Self, LlmError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        let gate = config
            .max_concurrent_requests
            .filter(|&limit| limit > 0)
            .map(|limit| Arc::new(RequestGate::new(limit)));
        Ok(LlmClient {
            api_key: std::env::var(API_KEY_ENV).ok(),
            config,
            http,
            gate,
        })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    fn attempt(&self, system: &str, user: &str) -> Result<String, LlmError> {
        let url = format!(
            "{}/chat/completions",
            self.config.base_url.trim_end_matches('/')
        );
        let body = json!({
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_tokens,
        });
        let mut request = self.http.post(&url).json(&body);
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(|e| {
            if e.is_timeout() {
                LlmError::Timeout
            } else {
                LlmError::Transport(e.to_string())
            }
        })?;
        let status = response.status();
        if !status.is_success() {
            return Err(LlmError::HttpStatus(status.as_u16()));
        }
        let parsed: CompletionResponse = response
            .json()
            .map_err(|e| LlmError::MalformedResponse(e.to_string()))?;
        parsed
            .choices
            .first()
            .and_then(|c| c.message.content.clone())
            .ok_or_else(|| LlmError::MalformedResponse("no choices[0].message.content".into()))
    }
}

impl ChatCompletion for LlmClient {
    /// Send one completion request, retrying transport and 5xx failures
    /// with exponential backoff up to the configured attempt budget.
    fn complete(&mut self, system: &str, user: &str) -> Result<String, LlmError> {
        if let Some(gate) = &self.gate {
            gate.acquire();
        }
        let result = (|| {
            let mut last: Option<LlmError> = None;
            for attempt in 1..=self.config.max_attempts {
                match self.attempt(system, user) {
                    Ok(text) => return Ok(text),
                    Err(err) if err.retryable() && attempt < self.config.max_attempts => {
                        let backoff = self.config.backoff_ms << (attempt - 1).min(8);
                        std::thread::sleep(Duration::from_millis(backoff));
                        last = Some(err);
                    }
                    Err(err) if err.retryable() => last = Some(err),
                    Err(err) => return Err(err),
                }
            }
            Err(LlmError::RetriesExhausted {
                attempts: self.config.max_attempts,
                last: last.map(|e| e.to_string()).unwrap_or_default(),
            })
        })();
        if let Some(gate) = &self.gate {
            gate.release();
        }
        result
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{Read, Write};
    use std::net::TcpListener;

    /// Minimal HTTP/1.1 server returning a scripted status sequence; the
    /// final 200 carries a completions-shaped body.
    fn mock_server(statuses: Vec<u16>) -> (String, std::thread::JoinHandle<usize>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handle = std::thread::spawn(move || {
            let mut served = 0;
            for status in statuses {
                let (mut stream, _) = listener.accept().unwrap();
                let mut buf = [0u8; 8192];
                let mut request = Vec::new();
                loop {
                    let n = stream.read(&mut buf).unwrap();
                    request.extend_from_slice(&buf[..n]);
                    if n == 0 || request.windows(4).any(|w| w == b"\r\n\r\n") {
                        break;
                    }
                }
                // Drain the body if the headers promise one.
                let head = String::from_utf8_lossy(&request);
                if let Some(len) = head
                    .lines()
                    .find_map(|l| {
                        l.to_ascii_lowercase()
                            .strip_prefix("content-length:")
                            .map(str::trim)
                            .map(String::from)
                    })
                    .and_then(|v| v.parse::<usize>().ok())
                {
                    let body_so_far = request
                        .windows(4)
                        .position(|w| w == b"\r\n\r\n")
                        .map(|p| request.len() - (p + 4))
                        .unwrap_or(0);
                    let mut remaining = len.saturating_sub(body_so_far);
                    while remaining > 0 {
                        let n = stream.read(&mut buf).unwrap();
                        if n == 0 {
                            break;
                        }
                        remaining = remaining.saturating_sub(n);
                    }
                }
                let body = r#"{"choices":[{"message":{"role":"assistant","content":"ANSWER: A\nCONFIDENCE: 0.9"}}]}"#;
                let response = if status == 200 {
                    format!(
                        "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{}",
                        body.len(),
                        body
                    )
                } else {
                    format!(
                        "HTTP/1.1 {status} Error\r\ncontent-length: 0\r\nconnection: close\r\n\r\n"
                    )
                };
                stream.write_all(response.as_bytes()).unwrap();
                served += 1;
            }
            served
        });
        (format!("http://{addr}"), handle)
    }

    fn quick_config(base_url: &str, max_attempts: u32) -> EndpointConfig {
        let mut config = EndpointConfig::new(base_url, "test-model");
        config.max_attempts = max_attempts;
        config.backoff_ms = 1;
        config.timeout_secs = 5;
        config
    }

    #[test]
    fn healthy_endpoint_returns_text() {
        let (url, handle) = mock_server(vec![200]);
        let mut client = LlmClient::new(quick_config(&url, 3)).unwrap();
        let text = client.complete("sys", "user").unwrap();
        assert!(text.contains("ANSWER: A"));
        assert_eq!(handle.join().unwrap(), 1);
    }

    #[test]
    fn request_gate_caps_concurrency() {
        use std::sync::atomic::{AtomicUsize, Ordering};
        let gate = RequestGate::new(2);
        let in_flight = AtomicUsize::new(0);
        let peak = AtomicUsize::new(0);
        std::thread::scope(|scope| {
            for _ in 0..8 {
                scope.spawn(|| {
                    gate.acquire();
                    let now = in_flight.fetch_add(1, Ordering::SeqCst) + 1;
                    peak.fetch_max(now, Ordering::SeqCst);
                    std::thread::sleep(Duration::from_millis(5));
                    in_flight.fetch_sub(1, Ordering::SeqCst);
                    gate.release();
                });
            }
        });
        assert!(peak.load(Ordering::SeqCst) <= 2);
    }

    #[test]
    fn two_500s_then_200_succeeds_on_attempt_three() {
        let (url, handle) = mock_server(vec![500, 500, 200]);
        let mut client = LlmClient::new(quick_config(&url, 3)).unwrap();
        let text = client.complete("sys", "user").unwrap();
        assert!(text.contains("CONFIDENCE"));
        assert_eq!(handle.join().unwrap(), 3);
    }

    #[test]
    fn unreachable_host_exhausts_retries() {
        // Reserve a port and close it so nothing is listening.
        let port = {
            let l = TcpListener::bind("127.0.0.1:0").unwrap();
            l.local_addr().unwrap().port()
        };
        let mut client =
            LlmClient::new(quick_config(&format!("http://127.0.0.1:{port}"), 2)).unwrap();
        match client.complete("sys", "user") {
            Err(LlmError::RetriesExhausted { attempts: 2, .. }) => {}
            other => panic!("expected RetriesExhausted, got {other:?}"),
        }
    }

    #[test]
    fn client_error_is_not_retried() {
        let (url, handle) = mock_server(vec![401]);
        let mut client = LlmClient::new(quick_config(&url, 3)).unwrap();
        match client.complete("sys", "user") {
            Err(LlmError::HttpStatus(401)) => {}
            other => panic!("expected HttpStatus(401), got {other:?}"),
        }
        assert_eq!(handle.join().unwrap(), 1);
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        let mut config = EndpointConfig::new("http://x", "m");
        config.temperature = -1.0;
        assert!(config.validate().is_err());
        config.temperature = 0.0;
        config.max_attempts = 0;
        assert!(config.validate().is_err());
    }
}
