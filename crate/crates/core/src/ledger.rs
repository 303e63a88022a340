//! Token accounting: per-call usage and the per-stage ledger of one run.

use serde::{Deserialize, Serialize};
use std::fmt;

/// Token usage for one or more chat calls.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenCount {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub total_tokens: u64,
    /// Set when any contributing count came from [`estimate_tokens`] rather than the provider.
    pub estimated: bool,
}

impl TokenCount {
    pub fn new(prompt_tokens: u64, completion_tokens: u64) -> Self {
        Self {
            prompt_tokens,
            completion_tokens,
            total_tokens: prompt_tokens + completion_tokens,
            estimated: false,
        }
    }

    pub fn estimated_from(prompt: &str, completion: &str) -> Self {
        Self {
            estimated: true,
            ..Self::new(estimate_tokens(prompt), estimate_tokens(completion))
        }
    }

    pub fn add(&mut self, other: &TokenCount) {
        self.prompt_tokens += other.prompt_tokens;
        self.completion_tokens += other.completion_tokens;
        self.total_tokens += other.total_tokens;
        self.estimated |= other.estimated;
    }
}

/// Fallback token count when the provider omits usage: `ceil(chars / 4)`.
pub fn estimate_tokens(text: &str) -> u64 {
    let chars = text.chars().count() as u64;
    chars.div_ceil(4)
}

/// Pipeline stage tag carried by every transcript entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Decomposition,
    Routing,
    /// LLM calls made by a retrieval backend (e.g. SQL translation).
    Retrieval,
    Extraction,
    Reflexion,
    Fusion,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Decomposition,
        Stage::Routing,
        Stage::Retrieval,
        Stage::Extraction,
        Stage::Reflexion,
        Stage::Fusion,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Decomposition => "decomposition",
            Stage::Routing => "routing",
            Stage::Retrieval => "retrieval",
            Stage::Extraction => "extraction",
            Stage::Reflexion => "reflexion",
            Stage::Fusion => "fusion",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Tokens and call count for one stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageTokens {
    pub calls: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub total_tokens: u64,
}

impl StageTokens {
    fn add(&mut self, count: &TokenCount) {
        self.calls += 1;
        self.prompt_tokens += count.prompt_tokens;
        self.completion_tokens += count.completion_tokens;
        self.total_tokens += count.total_tokens;
    }
}

/// Per-stage token totals for one question. `total` is always the sum of the stage totals.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenLedger {
    pub decomposition: StageTokens,
    pub routing: StageTokens,
    pub extraction: StageTokens,
    pub reflexion: StageTokens,
    pub fusion: StageTokens,
    pub retrieval_aux: StageTokens,
    pub total: u64,
    pub prompt_total: u64,
    pub completion_total: u64,
    pub estimated: bool,
}

impl TokenLedger {
    pub fn record(&mut self, stage: Stage, count: &TokenCount) {
        self.stage_mut(stage).add(count);
        self.total += count.total_tokens;
        self.prompt_total += count.prompt_tokens;
        self.completion_total += count.completion_tokens;
        self.estimated |= count.estimated;
    }

    pub fn stage(&self, stage: Stage) -> &StageTokens {
        match stage {
            Stage::Decomposition => &self.decomposition,
            Stage::Routing => &self.routing,
            Stage::Retrieval => &self.retrieval_aux,
            Stage::Extraction => &self.extraction,
            Stage::Reflexion => &self.reflexion,
            Stage::Fusion => &self.fusion,
        }
    }

    fn stage_mut(&mut self, stage: Stage) -> &mut StageTokens {
        match stage {
            Stage::Decomposition => &mut self.decomposition,
            Stage::Routing => &mut self.routing,
            Stage::Retrieval => &mut self.retrieval_aux,
            Stage::Extraction => &mut self.extraction,
            Stage::Reflexion => &mut self.reflexion,
            Stage::Fusion => &mut self.fusion,
        }
    }

    /// Sum of the per-stage totals; equals `total` for any ledger built through [`record`](Self::record).
    pub fn stage_sum(&self) -> u64 {
        Stage::ALL.iter().map(|s| self.stage(*s).total_tokens).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn estimate_is_ceiling_of_quarter_chars() {
        assert_eq!(estimate_tokens(""), 0);
        assert_eq!(estimate_tokens("abcdefgh"), 2);
        assert_eq!(estimate_tokens("abcdefghi"), 3);
        // characters, not bytes
        assert_eq!(estimate_tokens("ééééé"), 2);
    }

    #[test]
    fn ledger_total_tracks_stage_sum() {
        let mut ledger = TokenLedger::default();
        ledger.record(Stage::Decomposition, &TokenCount::new(500, 100));
        ledger.record(Stage::Routing, &TokenCount::new(30, 10));
        ledger.record(Stage::Extraction, &TokenCount::new(250, 50));
        ledger.record(Stage::Fusion, &TokenCount::new(150, 50));
        assert_eq!(ledger.total, 1140);
        assert_eq!(ledger.stage_sum(), 1140);
        assert_eq!(ledger.routing.calls, 1);
        assert!(!ledger.estimated);
    }
}
