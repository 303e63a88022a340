//! Agentic retrieval-augmented question answering.
//!
//! A question is planned into a DAG of subqueries. Each subquery is routed
//! by the model to one of several registered knowledge sources, its answer
//! is extracted from the retrieved evidence, and failed attempts are retried
//! against sources not yet tried. Successful subanswers are fused into the
//! final answer.
//!
//! ```no_run
//! use sieve_core::{load_registry, run_pipeline, HttpGateway, Endpoint, PipelineConfig, Query};
//! use std::time::Duration;
//!
//! let registry = load_registry("sources.toml".as_ref()).unwrap();
//! let config = PipelineConfig::default();
//! let gateway = HttpGateway::new(
//!     Endpoint::new("https://api.openai.com/v1", std::env::var("LLM_API_KEY").unwrap()),
//!     config.max_retries,
//!     Duration::from_secs(config.request_timeout),
//! );
//! let query = Query::new("q1", "What country is Erik Hort's birthplace in?").unwrap();
//! let trace = run_pipeline(&query, &registry, &config, &gateway).unwrap();
//! println!("{}", trace.final_answer);
//! ```

pub mod config;
pub mod dag;
pub mod engine;
pub mod eval;
pub mod ledger;
pub mod llm;
pub mod memory;
pub mod sources;
pub mod stages;

pub use config::{ConfigError, PipelineConfig};
pub use dag::{topological_order, validate_dag, DagViolation, Query, StructuralError, SubqueryDag, SubqueryNode};
pub use engine::{
    execute_subquery, ledger_rollup, run_pipeline, EngineError, FrozenTimer, Pipeline, RoutingDecision, RunTrace,
    SystemTimer, Timer, TranscriptEntry,
};
pub use eval::{
    ablate, exact_match, f1_score, fusion_effect, load_dataset, normalize_answer, partition_corpus, run_eval,
    AblationSetting, AblationTable, Aggregate, EvalOptions, EvalRecord, EvalReport, FusionEffect, QaExample,
    SegmentProfiles,
};
pub use ledger::{estimate_tokens, Stage, TokenCount, TokenLedger};
pub use llm::{
    scripted_complete, ChatModel, ChatRequest, ChatResponse, Endpoint, HttpGateway, LlmError, Script, ScriptEntry,
    ScriptedGateway, VirtualSleeper,
};
pub use memory::{AttemptRecord, Memory};
pub use sources::{
    load_registry, merged_view, CorpusDocument, Passage, RetrievalResult, Segment, SourceDescriptor, SourceError,
    SourceKind, SourceRegistry,
};
pub use stages::{PromptSet, StageError, UNKNOWN};
