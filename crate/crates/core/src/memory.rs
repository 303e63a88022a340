//! Per-question memory of retrieval attempts.

use crate::ledger::TokenCount;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One retrieval attempt for one subquery.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub subquery_index: usize,
    /// Subquery text after placeholder substitution (and any reflexion rephrase).
    pub resolved_text: String,
    /// Empty when the attempt failed before a source was chosen.
    pub source_name: String,
    pub raw_evidence: String,
    pub extracted_answer: String,
    pub success: bool,
    pub attempt_number: u32,
    pub tokens: TokenCount,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("subquery {0} already has a success record")]
pub struct DuplicateSuccess(pub usize);

/// Success and failure logs for one question.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Memory {
    pub successes: Vec<AttemptRecord>,
    pub failures: Vec<AttemptRecord>,
}

impl Memory {
    /// Files the record under successes or failures according to its flag.
    pub fn log(&mut self, record: AttemptRecord) -> Result<(), DuplicateSuccess> {
        if record.success {
            if self.success_for(record.subquery_index).is_some() {
                return Err(DuplicateSuccess(record.subquery_index));
            }
            self.successes.push(record);
        } else {
            self.failures.push(record);
        }
        Ok(())
    }

    pub fn success_for(&self, index: usize) -> Option<&AttemptRecord> {
        self.successes.iter().find(|r| r.subquery_index == index)
    }

    pub fn answer_for(&self, index: usize) -> Option<&str> {
        self.success_for(index).map(|r| r.extracted_answer.as_str())
    }

    /// Distinct source names that already failed for `index`, in first-failure order.
    pub fn failed_sources(&self, index: usize) -> Vec<String> {
        let mut names: Vec<String> = Vec::new();
        for r in self.failures.iter().filter(|r| r.subquery_index == index) {
            if !r.source_name.is_empty() && !names.contains(&r.source_name) {
                names.push(r.source_name.clone());
            }
        }
        names
    }

    /// Successes ordered by subquery index.
    pub fn successes_in_order(&self) -> Vec<&AttemptRecord> {
        let mut out: Vec<&AttemptRecord> = self.successes.iter().collect();
        out.sort_by_key(|r| r.subquery_index);
        out
    }
}
