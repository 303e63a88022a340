use super::{ChatModel, ChatRequest, ChatResponse, LlmError};
use crate::ledger::TokenCount;
use serde::Deserialize;
use std::sync::Mutex;
use std::time::Duration;
use thiserror::Error;

/// Base URL plus bearer credential of an OpenAI-compatible provider.
#[derive(Clone)]
pub struct Endpoint {
    pub base_url: String,
    pub api_key: String,
}

impl std::fmt::Debug for Endpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Endpoint")
            .field("base_url", &self.base_url)
            .field("api_key", &"<redacted>")
            .finish()
    }
}

impl Endpoint {
    pub fn new(base_url: impl Into<String>, api_key: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            api_key: api_key.into(),
        }
    }

    pub fn completions_url(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpReply {
    pub status: u16,
    pub body: String,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransportError {
    #[error("request timed out")]
    Timeout,
    #[error("{0}")]
    Other(String),
}

/// Moves one JSON POST over the wire. Split out so retry behavior can be tested against a fake server.
pub trait Transport: Send + Sync {
    fn post_json(&self, url: &str, api_key: &str, body: &str, timeout: Duration) -> Result<HttpReply, TransportError>;
}

/// Injectable sleep used between retries.
pub trait Sleeper: Send + Sync {
    fn sleep(&self, delay: Duration);
}

#[derive(Debug, Default, Clone, Copy)]
pub struct ThreadSleeper;

impl Sleeper for ThreadSleeper {
    fn sleep(&self, delay: Duration) {
        std::thread::sleep(delay);
    }
}

/// Records requested delays instead of sleeping.
#[derive(Debug, Default)]
pub struct VirtualSleeper {
    delays: Mutex<Vec<Duration>>,
}

impl VirtualSleeper {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn delays(&self) -> Vec<Duration> {
        self.delays.lock().unwrap().clone()
    }

    pub fn total(&self) -> Duration {
        self.delays().iter().sum()
    }
}

impl Sleeper for VirtualSleeper {
    fn sleep(&self, delay: Duration) {
        self.delays.lock().unwrap().push(delay);
    }
}

/// 429, 408 and 500–504 are worth retrying; everything else is final.
pub fn is_retriable_status(status: u16) -> bool {
    matches!(status, 408 | 429 | 500..=504)
}

/// Live gateway with `max_retries` retries, sleeping `2^i` seconds before the i-th retry.
pub struct HttpGateway<T = UreqTransport, S = ThreadSleeper> {
    endpoint: Endpoint,
    transport: T,
    sleeper: S,
    max_retries: u32,
    timeout: Duration,
}

impl HttpGateway {
    pub fn new(endpoint: Endpoint, max_retries: u32, timeout: Duration) -> Self {
        Self::with_parts(endpoint, UreqTransport, ThreadSleeper, max_retries, timeout)
    }
}

impl<T: Transport, S: Sleeper> HttpGateway<T, S> {
    pub fn with_parts(endpoint: Endpoint, transport: T, sleeper: S, max_retries: u32, timeout: Duration) -> Self {
        Self {
            endpoint,
            transport,
            sleeper,
            max_retries,
            timeout,
        }
    }

    pub fn sleeper(&self) -> &S {
        &self.sleeper
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    prompt_tokens: u64,
    completion_tokens: u64,
    total_tokens: Option<u64>,
}

fn decode(body: &str, prompt: &str) -> Result<(String, TokenCount), LlmError> {
    let wire: WireResponse = serde_json::from_str(body).map_err(|e| LlmError::MalformedResponse(e.to_string()))?;
    let content = wire
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| LlmError::MalformedResponse("no choices".into()))?
        .message
        .content
        .unwrap_or_default();
    let usage = match wire.usage {
        Some(u) => TokenCount {
            prompt_tokens: u.prompt_tokens,
            completion_tokens: u.completion_tokens,
            total_tokens: u.total_tokens.unwrap_or(u.prompt_tokens + u.completion_tokens),
            estimated: false,
        },
        None => TokenCount::estimated_from(prompt, &content),
    };
    Ok((content, usage))
}

impl<T: Transport, S: Sleeper> ChatModel for HttpGateway<T, S> {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        request.validate()?;
        let body = serde_json::json!({
            "model": request.model,
            "messages": request.messages,
            "temperature": request.temperature,
        })
        .to_string();
        let url = self.endpoint.completions_url();
        let mut last = String::new();
        for attempt in 1..=self.max_retries + 1 {
            if attempt > 1 {
                let retry = attempt - 1;
                self.sleeper.sleep(Duration::from_secs(1u64 << retry));
            }
            match self.transport.post_json(&url, &self.endpoint.api_key, &body, self.timeout) {
                Ok(reply) if (200..300).contains(&reply.status) => {
                    let (content, usage) = decode(&reply.body, request.prompt())?;
                    return Ok(ChatResponse {
                        content,
                        usage,
                        attempts_used: attempt,
                    });
                }
                Ok(reply) if is_retriable_status(reply.status) => last = format!("HTTP {}", reply.status),
                Ok(reply) => {
                    return Err(LlmError::Protocol {
                        status: reply.status,
                        body: reply.body,
                    })
                }
                Err(TransportError::Timeout) => last = "timeout".to_string(),
                Err(TransportError::Other(msg)) => return Err(LlmError::Transport(msg)),
            }
        }
        Err(LlmError::Transient {
            attempts: self.max_retries + 1,
            last,
        })
    }
}

/// Blocking HTTP transport on `ureq`.
#[derive(Default)]
pub struct UreqTransport;

impl Transport for UreqTransport {
    fn post_json(&self, url: &str, api_key: &str, body: &str, timeout: Duration) -> Result<HttpReply, TransportError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let result = agent
            .post(url)
            .header("Authorization", &format!("Bearer {api_key}"))
            .header("Content-Type", "application/json")
            .send(body);
        match result {
            Ok(mut resp) => {
                let status = resp.status().as_u16();
                let body = resp
                    .body_mut()
                    .read_to_string()
                    .map_err(classify)?;
                Ok(HttpReply { status, body })
            }
            Err(e) => Err(classify(e)),
        }
    }
}

fn classify(err: ureq::Error) -> TransportError {
    match err {
        ureq::Error::Timeout(_) => TransportError::Timeout,
        ureq::Error::Io(io) if io.kind() == std::io::ErrorKind::TimedOut => TransportError::Timeout,
        other => TransportError::Other(other.to_string()),
    }
}
