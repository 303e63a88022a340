use crate::config::PipelineConfig;
use crate::ledger::TokenCount;
use crate::llm::{ChatModel, ChatRequest, LlmError};
use crate::sources::{CorpusDocument, Segment};
use crate::stages::{parse_route, PromptSet};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Router-style descriptions of the two corpus segments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentProfiles {
    pub local: String,
    pub global: String,
}

impl SegmentProfiles {
    pub fn parse(text: &str) -> Result<Self, String> {
        let p: SegmentProfiles = toml::from_str(text).map_err(|e| e.to_string())?;
        if p.local.trim().is_empty() || p.global.trim().is_empty() {
            return Err("both profiles must be non-empty".into());
        }
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionSummary {
    /// Documents sent to the classifier in this run.
    pub classified: usize,
    /// Replies that named neither segment and fell back to global.
    pub fallbacks: usize,
    pub local: usize,
    pub global: usize,
    pub tokens: TokenCount,
}

pub fn is_fully_tagged(docs: &[CorpusDocument]) -> bool {
    docs.iter().all(|d| d.segment != Segment::Unassigned)
}

/// Tags every unassigned document with one classification call each.
/// Replies that name neither segment fall back to global.
pub fn partition_corpus(
    docs: &mut [CorpusDocument],
    profiles: &SegmentProfiles,
    model: &dyn ChatModel,
    config: &PipelineConfig,
    prompts: &PromptSet,
) -> Result<PartitionSummary, LlmError> {
    let mut summary = PartitionSummary::default();
    for doc in docs.iter_mut().filter(|d| d.segment == Segment::Unassigned) {
        let passage = if doc.title.trim().is_empty() {
            doc.text.clone()
        } else {
            format!("{}: {}", doc.title.trim(), doc.text)
        };
        let prompt = prompts.partition_prompt(&profiles.local, &profiles.global, &passage);
        let response = model.complete(&ChatRequest::user(&config.model, prompt, config.temperature))?;
        summary.tokens.add(&response.usage);
        summary.classified += 1;
        doc.segment = match parse_route(&response.content, &["local", "global"]).as_deref() {
            Ok("local") => Segment::Local,
            Ok(_) => Segment::Global,
            Err(_) => {
                summary.fallbacks += 1;
                Segment::Global
            }
        };
    }
    summary.local = docs.iter().filter(|d| d.segment == Segment::Local).count();
    summary.global = docs.iter().filter(|d| d.segment == Segment::Global).count();
    Ok(summary)
}
