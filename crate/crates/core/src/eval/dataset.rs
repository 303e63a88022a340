use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DatasetError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}: line {line}: {message}")]
    Line { path: String, line: usize, message: String },
    #[error("{0}: dataset is empty")]
    Empty(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaExample {
    pub id: String,
    pub question: String,
    #[serde(alias = "gold_answers")]
    pub answers: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_passage_ids: Option<Vec<String>>,
}

/// Parses JSON Lines `{id, question, answers, gold_passage_ids?}`.
pub fn parse_dataset(text: &str, origin: &str) -> Result<Vec<QaExample>, DatasetError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| DatasetError::Line {
            path: origin.to_string(),
            line: i + 1,
            message,
        };
        let ex: QaExample = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        if ex.question.trim().is_empty() {
            return Err(err("question is empty".into()));
        }
        if ex.answers.is_empty() {
            return Err(err("answers must not be empty".into()));
        }
        out.push(ex);
    }
    if out.is_empty() {
        return Err(DatasetError::Empty(origin.to_string()));
    }
    Ok(out)
}

pub fn load_dataset(path: &Path) -> Result<Vec<QaExample>, DatasetError> {
    let origin = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| DatasetError::Io {
        path: origin.clone(),
        message: e.to_string(),
    })?;
    parse_dataset(&text, &origin)
}
