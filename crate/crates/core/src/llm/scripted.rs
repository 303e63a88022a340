use super::{ChatModel, ChatRequest, ChatResponse, LlmError};
use crate::ledger::TokenCount;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::path::Path;
use std::sync::Mutex;

/// One canned response, optionally guarded by a substring the prompt must contain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    #[serde(default, rename = "expect", skip_serializing_if = "Option::is_none")]
    pub expect_substring: Option<String>,
    pub response: String,
}

impl ScriptEntry {
    pub fn new(response: impl Into<String>) -> Self {
        Self {
            expect_substring: None,
            response: response.into(),
        }
    }

    pub fn guarded(expect: impl Into<String>, response: impl Into<String>) -> Self {
        Self {
            expect_substring: Some(expect.into()),
            response: response.into(),
        }
    }
}

/// Ordered responses, consumed strictly front to back.
///
/// File form is a JSON array of `{"expect": "...", "response": "..."}`
/// objects; `expect` may be omitted.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Script {
    pub entries: Vec<ScriptEntry>,
}

impl Script {
    pub fn new(entries: Vec<ScriptEntry>) -> Self {
        Self { entries }
    }

    pub fn push(&mut self, entry: ScriptEntry) {
        self.entries.push(entry);
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read script {}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("malformed script {}: {e}", path.display()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("script serializes")
    }
}

struct ScriptState {
    queue: VecDeque<ScriptEntry>,
    consumed: usize,
}

/// Deterministic stand-in for a live model. Usage is always estimated.
pub struct ScriptedGateway {
    state: Mutex<ScriptState>,
}

impl ScriptedGateway {
    pub fn new(script: Script) -> Self {
        Self {
            state: Mutex::new(ScriptState {
                queue: script.entries.into(),
                consumed: 0,
            }),
        }
    }

    pub fn remaining(&self) -> usize {
        self.state.lock().unwrap().queue.len()
    }

    pub fn consumed(&self) -> usize {
        self.state.lock().unwrap().consumed
    }
}

impl ChatModel for ScriptedGateway {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        request.validate()?;
        let mut state = self.state.lock().unwrap();
        let consumed = state.consumed;
        let entry = state.queue.pop_front().ok_or(LlmError::ScriptExhausted { consumed })?;
        state.consumed += 1;
        let prompt = request.prompt();
        if let Some(expected) = &entry.expect_substring {
            if !prompt.contains(expected.as_str()) {
                return Err(LlmError::GuardMismatch {
                    entry: consumed + 1,
                    expected: expected.clone(),
                });
            }
        }
        Ok(ChatResponse {
            usage: TokenCount::estimated_from(prompt, &entry.response),
            content: entry.response,
            attempts_used: 1,
        })
    }
}

/// Free-function form: answers `request` from the front of `script`.
pub fn scripted_complete(request: &ChatRequest, script: &mut Script) -> Result<ChatResponse, LlmError> {
    let gateway = ScriptedGateway::new(std::mem::take(script));
    let result = gateway.complete(request);
    script.entries = gateway.state.into_inner().unwrap().queue.into();
    result
}
