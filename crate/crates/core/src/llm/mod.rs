//! Chat-completion gateway shared by every pipeline stage.
//!
//! [`ChatModel`] is the single seam: [`HttpGateway`] speaks the
//! OpenAI-compatible `/chat/completions` protocol with bounded exponential
//! backoff, and [`ScriptedGateway`] replays a fixed list of responses for
//! tests and offline runs.

mod http;
mod scripted;

pub use http::{
    is_retriable_status, Endpoint, HttpGateway, HttpReply, Sleeper, ThreadSleeper, Transport, TransportError,
    UreqTransport, VirtualSleeper,
};
pub use scripted::{scripted_complete, Script, ScriptEntry, ScriptedGateway};

use crate::ledger::TokenCount;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

/// A single-turn request: exactly one user message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
}

impl ChatRequest {
    pub fn user(model: impl Into<String>, prompt: impl Into<String>, temperature: f64) -> Self {
        Self {
            model: model.into(),
            messages: vec![ChatMessage {
                role: Role::User,
                content: prompt.into(),
            }],
            temperature,
        }
    }

    /// The prompt text of the single user message.
    pub fn prompt(&self) -> &str {
        self.messages.first().map(|m| m.content.as_str()).unwrap_or("")
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        match self.messages.as_slice() {
            [m] if m.role == Role::User => Ok(()),
            _ => Err(LlmError::InvalidRequest(
                "request must carry exactly one user message".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
    pub usage: TokenCount,
    pub attempts_used: u32,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LlmError {
    #[error("invalid chat request: {0}")]
    InvalidRequest(String),
    /// Non-retriable HTTP status (e.g. 400, 401).
    #[error("provider rejected request with status {status}: {body}")]
    Protocol { status: u16, body: String },
    /// Retries exhausted on transient failures.
    #[error("transient failure after {attempts} attempts (last: {last})")]
    Transient { attempts: u32, last: String },
    #[error("malformed provider response: {0}")]
    MalformedResponse(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("script exhausted after {consumed} responses")]
    ScriptExhausted { consumed: usize },
    #[error("script entry {entry} expected prompt containing {expected:?}")]
    GuardMismatch { entry: usize, expected: String },
}

/// Anything that can answer a single-turn chat request.
pub trait ChatModel: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError>;
}

impl<T: ChatModel + ?Sized> ChatModel for &T {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        (**self).complete(request)
    }
}

impl<T: ChatModel + ?Sized> ChatModel for Box<T> {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        (**self).complete(request)
    }
}
