//! The pipeline controller: decompose, then per subquery substitute, route,
//! retrieve, extract and reflect (bounded), then fuse.
//!
//! Every model call goes through a recorder so the [`RunTrace`] carries the
//! full transcript, and the ledger is rolled up from that transcript.

use crate::config::{ConfigError, PipelineConfig};
use crate::dag::{Query, SubqueryDag, SubqueryNode};
use crate::ledger::{Stage, TokenCount, TokenLedger};
use crate::llm::{ChatModel, ChatRequest, LlmError};
use crate::memory::{AttemptRecord, Memory};
use crate::sources::{LlmCall, RegisteredSource, RetrieveContext, SourceError, SourceRegistry};
use crate::stages::{
    parse_answer_success, parse_final_answer, parse_reflected_subquestion, parse_route, parse_subqueries,
    substitute_variables, PromptSet, RoutingContext, UNKNOWN,
};
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use std::time::Instant;
use thiserror::Error;

/// Source of wall-clock readings, in seconds from an arbitrary origin.
pub trait Timer: Send + Sync {
    fn now(&self) -> f64;
}

pub struct SystemTimer {
    origin: Instant,
}

impl Default for SystemTimer {
    fn default() -> Self {
        Self { origin: Instant::now() }
    }
}

impl Timer for SystemTimer {
    fn now(&self) -> f64 {
        self.origin.elapsed().as_secs_f64()
    }
}

/// Always reads zero, so traces are byte-stable.
#[derive(Debug, Clone, Copy, Default)]
pub struct FrozenTimer;

impl Timer for FrozenTimer {
    fn now(&self) -> f64 {
        0.0
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot start: {0}")]
    Source(#[from] SourceError),
    #[error("model call failed: {0}")]
    Llm(#[from] LlmError),
    #[error("internal invariant broken: {0}")]
    Internal(String),
}

/// One model call as it happened.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub stage: Stage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subquery: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attempt: Option<u32>,
    pub prompt: String,
    pub response: String,
    pub tokens: TokenCount,
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoutingDecision {
    pub subquery: usize,
    pub attempt: u32,
    pub available: Vec<String>,
    pub excluded: Vec<String>,
    /// `None` when the reply named no available source.
    pub chosen: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub query: Query,
    pub config: PipelineConfig,
    pub dag: SubqueryDag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decomposition_error: Option<String>,
    pub transcript: Vec<TranscriptEntry>,
    pub routing: Vec<RoutingDecision>,
    pub attempts: Vec<AttemptRecord>,
    pub memory: Memory,
    pub ledger: TokenLedger,
    /// Answer of the last subquery before fusion, or `UNKNOWN`.
    pub pre_fusion_answer: String,
    pub final_answer: String,
    pub wall_time: f64,
}

impl RunTrace {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes")
    }

    pub fn calls(&self, stage: Stage) -> usize {
        self.transcript.iter().filter(|e| e.stage == stage).count()
    }

    /// Source names tried, in attempt order (empty string when no source was chosen).
    pub fn route_sequence(&self) -> Vec<&str> {
        self.attempts.iter().map(|a| a.source_name.as_str()).collect()
    }
}

/// Sums transcript tokens per stage.
pub fn ledger_rollup(trace: &RunTrace) -> TokenLedger {
    rollup(&trace.transcript)
}

fn rollup(transcript: &[TranscriptEntry]) -> TokenLedger {
    let mut ledger = TokenLedger::default();
    for e in transcript {
        ledger.record(e.stage, &e.tokens);
    }
    ledger
}

struct Recorder<'a> {
    model: &'a dyn ChatModel,
    config: &'a PipelineConfig,
    timer: &'a dyn Timer,
    transcript: Vec<TranscriptEntry>,
    subquery: Option<usize>,
    attempt: Option<u32>,
}

impl Recorder<'_> {
    fn tokens_since(&self, mark: usize) -> TokenCount {
        let mut t = TokenCount::default();
        for e in &self.transcript[mark..] {
            t.add(&e.tokens);
        }
        t
    }
}

impl LlmCall for Recorder<'_> {
    fn call(&mut self, stage: Stage, prompt: &str) -> Result<String, LlmError> {
        let request = ChatRequest::user(&self.config.model, prompt, self.config.temperature);
        let start = self.timer.now();
        let response = self.model.complete(&request)?;
        let wall_time = self.timer.now() - start;
        self.transcript.push(TranscriptEntry {
            stage,
            subquery: self.subquery,
            attempt: self.attempt,
            prompt: prompt.to_string(),
            response: response.content.clone(),
            tokens: response.usage,
            wall_time,
        });
        Ok(response.content)
    }
}

/// A configured pipeline bound to a registry. Cheap to share across threads.
pub struct Pipeline<'r> {
    registry: &'r SourceRegistry,
    config: PipelineConfig,
    prompts: PromptSet,
    timer: Arc<dyn Timer>,
    merged: Option<RegisteredSource>,
}

impl<'r> Pipeline<'r> {
    /// Refuses a routing-off configuration over sources that cannot be merged.
    pub fn new(registry: &'r SourceRegistry, config: PipelineConfig) -> Result<Self, EngineError> {
        config.validate()?;
        if registry.is_empty() {
            return Err(SourceError::NoSources.into());
        }
        let merged = if config.use_routing {
            None
        } else {
            Some(registry.merged_view()?)
        };
        Ok(Self {
            registry,
            config,
            prompts: PromptSet::default(),
            timer: Arc::new(SystemTimer::default()),
            merged,
        })
    }

    pub fn with_prompts(mut self, prompts: PromptSet) -> Self {
        self.prompts = prompts;
        self
    }

    pub fn with_timer(mut self, timer: Arc<dyn Timer>) -> Self {
        self.timer = timer;
        self
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn registry(&self) -> &SourceRegistry {
        self.registry
    }

    pub fn run(&self, query: &Query, model: &dyn ChatModel) -> Result<RunTrace, EngineError> {
        let started = self.timer.now();
        let mut rec = Recorder {
            model,
            config: &self.config,
            timer: self.timer.as_ref(),
            transcript: Vec::new(),
            subquery: None,
            attempt: None,
        };

        let mut decomposition_error = None;
        let dag = if self.config.decompose {
            let prompt = self
                .prompts
                .decomposition_prompt(query)
                .map_err(|e| EngineError::Internal(e.to_string()))?;
            let response = rec.call(Stage::Decomposition, &prompt)?;
            match parse_subqueries(&response) {
                Ok(dag) => dag,
                Err(e) => {
                    decomposition_error = Some(e.to_string());
                    SubqueryDag::single(query.text.trim())
                }
            }
        } else {
            SubqueryDag::single(query.text.trim())
        };

        let order = dag.topological_order().map_err(|e| EngineError::Internal(e.to_string()))?;
        let mut memory = Memory::default();
        let mut attempts = Vec::new();
        let mut routing = Vec::new();
        for index in order {
            let node = dag.node(index).expect("index from topological order");
            self.execute(node, &mut memory, &mut rec, &mut attempts, &mut routing)?;
        }
        rec.subquery = None;
        rec.attempt = None;

        let pre_fusion_answer = memory.answer_for(dag.len()).unwrap_or(UNKNOWN).to_string();
        let successes = memory.successes_in_order();
        let final_answer = match successes.as_slice() {
            [] => UNKNOWN.to_string(),
            // a one-node plan has nothing to fuse
            [only] if dag.len() == 1 => only.extracted_answer.clone(),
            [.., last] => {
                let fallback = last.extracted_answer.clone();
                let prompt = self.prompts.fusion_prompt(query, &successes);
                let response = rec.call(Stage::Fusion, &prompt)?;
                parse_final_answer(&response).unwrap_or(fallback)
            }
        };

        let transcript = rec.transcript;
        let ledger = rollup(&transcript);
        Ok(RunTrace {
            query: query.clone(),
            config: self.config.clone(),
            dag,
            decomposition_error,
            transcript,
            routing,
            attempts,
            memory,
            ledger,
            pre_fusion_answer,
            final_answer,
            wall_time: self.timer.now() - started,
        })
    }

    /// Runs one subquery to success or exhaustion. Returns its last attempt.
    pub fn execute_subquery(
        &self,
        node: &SubqueryNode,
        memory: &mut Memory,
        model: &dyn ChatModel,
    ) -> Result<AttemptRecord, EngineError> {
        let mut rec = Recorder {
            model,
            config: &self.config,
            timer: self.timer.as_ref(),
            transcript: Vec::new(),
            subquery: None,
            attempt: None,
        };
        self.execute(node, memory, &mut rec, &mut Vec::new(), &mut Vec::new())
    }

    fn execute(
        &self,
        node: &SubqueryNode,
        memory: &mut Memory,
        rec: &mut Recorder<'_>,
        attempts: &mut Vec<AttemptRecord>,
        routing: &mut Vec<RoutingDecision>,
    ) -> Result<AttemptRecord, EngineError> {
        let index = node.index;
        rec.subquery = Some(index);
        rec.attempt = None;

        let mut text = match substitute_variables(node, memory) {
            Ok(t) => t,
            Err(_) => {
                let record = AttemptRecord {
                    subquery_index: index,
                    resolved_text: node.template.clone(),
                    source_name: String::new(),
                    raw_evidence: String::new(),
                    extracted_answer: String::new(),
                    success: false,
                    attempt_number: 1,
                    tokens: TokenCount::default(),
                };
                return self.file(record, memory, attempts);
            }
        };

        let budget = self.config.attempt_budget();
        let mut last = None;
        for attempt in 1..=budget {
            rec.attempt = Some(attempt);
            let mark = rec.transcript.len();

            let source = if self.config.use_routing {
                let ctx = RoutingContext {
                    subquery_text: text.clone(),
                    sources: self.registry.profiles(),
                    excluded: memory.failed_sources(index),
                };
                let available: Vec<String> = ctx.available().into_iter().map(String::from).collect();
                if available.is_empty() {
                    break;
                }
                let prompt = self
                    .prompts
                    .routing_prompt(&ctx)
                    .map_err(|e| EngineError::Internal(e.to_string()))?;
                let response = rec.call(Stage::Routing, &prompt)?;
                let names: Vec<&str> = available.iter().map(String::as_str).collect();
                let chosen = parse_route(&response, &names).ok();
                routing.push(RoutingDecision {
                    subquery: index,
                    attempt,
                    available: available.clone(),
                    excluded: ctx.excluded.clone(),
                    chosen: chosen.clone(),
                });
                chosen.and_then(|name| self.registry.get(&name))
            } else {
                self.merged.as_ref()
            };

            let mut record = AttemptRecord {
                subquery_index: index,
                resolved_text: text.clone(),
                source_name: source.map(|s| s.descriptor.name.clone()).unwrap_or_default(),
                raw_evidence: String::new(),
                extracted_answer: String::new(),
                success: false,
                attempt_number: attempt,
                tokens: TokenCount::default(),
            };

            if let Some(source) = source {
                let mut ctx = RetrieveContext {
                    llm: &mut *rec,
                    prompts: &self.prompts,
                };
                match source.retrieve(&text, self.config.top_k, &mut ctx) {
                    Ok(result) => {
                        record.raw_evidence = result.evidence();
                        let prompt = self.prompts.extraction_prompt(&text, &record.raw_evidence);
                        let response = rec.call(Stage::Extraction, &prompt)?;
                        let verdict = parse_answer_success(&response);
                        record.extracted_answer = verdict.answer;
                        record.success = verdict.success;
                    }
                    Err(SourceError::Llm(e)) => return Err(e.into()),
                    // guard or backend failure: the attempt fails, reflexion may still help
                    Err(e) => record.raw_evidence = format!("[retrieval failed: {e}]"),
                }
            }
            record.tokens = rec.tokens_since(mark);
            let success = record.success;
            let failed_result = if record.extracted_answer.is_empty() {
                record.raw_evidence.clone()
            } else {
                record.extracted_answer.clone()
            };
            last = Some(self.file(record, memory, attempts)?);
            if success {
                break;
            }

            let more_sources = !self.config.use_routing || memory.failed_sources(index).len() < self.registry.len();
            if self.config.use_reflexion && attempt < budget && more_sources {
                let prompt = self.prompts.reflexion_prompt(&text, &failed_result);
                let response = rec.call(Stage::Reflexion, &prompt)?;
                if let Ok(rephrased) = parse_reflected_subquestion(&response) {
                    text = rephrased;
                }
            }
        }
        last.ok_or_else(|| EngineError::Internal(format!("subquery {index} ran no attempts")))
    }

    fn file(
        &self,
        record: AttemptRecord,
        memory: &mut Memory,
        attempts: &mut Vec<AttemptRecord>,
    ) -> Result<AttemptRecord, EngineError> {
        attempts.push(record.clone());
        memory
            .log(record.clone())
            .map_err(|e| EngineError::Internal(e.to_string()))?;
        Ok(record)
    }
}

/// Runs one question end to end with default prompts and the system clock.
pub fn run_pipeline(
    query: &Query,
    registry: &SourceRegistry,
    config: &PipelineConfig,
    gateway: &dyn ChatModel,
) -> Result<RunTrace, EngineError> {
    Pipeline::new(registry, config.clone())?.run(query, gateway)
}

/// Runs a single subquery against `memory`, appending its attempts there.
pub fn execute_subquery(
    node: &SubqueryNode,
    registry: &SourceRegistry,
    memory: &mut Memory,
    config: &PipelineConfig,
    gateway: &dyn ChatModel,
) -> Result<AttemptRecord, EngineError> {
    Pipeline::new(registry, config.clone())?.execute_subquery(node, memory, gateway)
}
