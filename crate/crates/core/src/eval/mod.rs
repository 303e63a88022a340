//! Evaluation: dataset ingestion, corpus partitioning, EM/F1 scoring,
//! token and fusion-effect accounting, and the ablation grid.

mod dataset;
mod metrics;
mod partition;

pub use dataset::{load_dataset, parse_dataset, DatasetError, QaExample};
pub use metrics::{exact_match, f1_score, normalize_answer};
pub use partition::{is_fully_tagged, partition_corpus, PartitionSummary, SegmentProfiles};

use crate::config::PipelineConfig;
use crate::dag::Query;
use crate::engine::{EngineError, Pipeline, RunTrace, SystemTimer, Timer};
use crate::ledger::{Stage, TokenLedger};
use crate::llm::ChatModel;
use crate::sources::SourceRegistry;
use crate::stages::{PromptSet, UNKNOWN};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub id: String,
    pub question: String,
    pub gold_answers: Vec<String>,
    pub predicted: String,
    pub em: u8,
    pub f1: f64,
    pub ledger: TokenLedger,
    pub pre_fusion_answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusionEffect {
    pub fixed: usize,
    pub corrupted: usize,
    pub unchanged_right: usize,
    pub unchanged_wrong: usize,
}

impl FusionEffect {
    pub fn total(&self) -> usize {
        self.fixed + self.corrupted + self.unchanged_right + self.unchanged_wrong
    }
}

/// Compares each record's final-subquery answer with its fused answer under EM.
pub fn fusion_effect(records: &[EvalRecord]) -> FusionEffect {
    let mut fx = FusionEffect::default();
    for r in records {
        let before = exact_match(&r.pre_fusion_answer, &r.gold_answers) == 1;
        let after = exact_match(&r.predicted, &r.gold_answers) == 1;
        match (before, after) {
            (false, true) => fx.fixed += 1,
            (true, false) => fx.corrupted += 1,
            (true, true) => fx.unchanged_right += 1,
            (false, false) => fx.unchanged_wrong += 1,
        }
    }
    fx
}

/// Means over records. Integer sums are kept so callers can check them exactly.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub questions: usize,
    pub em_hits: u64,
    pub em: f64,
    pub f1: f64,
    pub token_sum: u64,
    pub mean_total_tokens: f64,
    pub mean_prompt_tokens: f64,
    pub mean_completion_tokens: f64,
    pub mean_stage_tokens: BTreeMap<String, f64>,
    pub failed_runs: usize,
    pub estimated: bool,
}

impl Aggregate {
    /// Independent of record order: integer sums, and F1 summed in sorted order.
    pub fn from_records(records: &[EvalRecord]) -> Self {
        let n = records.len();
        if n == 0 {
            return Self::default();
        }
        let nf = n as f64;
        let em_hits: u64 = records.iter().map(|r| u64::from(r.em)).sum();
        let mut f1s: Vec<f64> = records.iter().map(|r| r.f1).collect();
        f1s.sort_by(f64::total_cmp);
        let token_sum: u64 = records.iter().map(|r| r.ledger.total).sum();
        let prompt_sum: u64 = records.iter().map(|r| r.ledger.prompt_total).sum();
        let completion_sum: u64 = records.iter().map(|r| r.ledger.completion_total).sum();
        let mean_stage_tokens = Stage::ALL
            .iter()
            .map(|s| {
                let sum: u64 = records.iter().map(|r| r.ledger.stage(*s).total_tokens).sum();
                (ledger_key(*s).to_string(), sum as f64 / nf)
            })
            .collect();
        Self {
            questions: n,
            em_hits,
            em: em_hits as f64 / nf,
            f1: f1s.iter().sum::<f64>() / nf,
            token_sum,
            mean_total_tokens: token_sum as f64 / nf,
            mean_prompt_tokens: prompt_sum as f64 / nf,
            mean_completion_tokens: completion_sum as f64 / nf,
            mean_stage_tokens,
            failed_runs: records.iter().filter(|r| r.error.is_some()).count(),
            estimated: records.iter().any(|r| r.ledger.estimated),
        }
    }
}

fn ledger_key(stage: Stage) -> &'static str {
    match stage {
        Stage::Retrieval => "retrieval_aux",
        other => other.as_str(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: PipelineConfig,
    pub per_question: Vec<EvalRecord>,
    pub aggregate: Aggregate,
    pub fusion_effect: FusionEffect,
    pub wall_time: f64,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One row per question.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["id", "predicted", "em", "f1", "pre_fusion_answer", "total_tokens", "prompt_tokens", "completion_tokens"];
        header.extend(Stage::ALL.iter().map(|s| ledger_key(*s)));
        header.extend(["estimated", "error"]);
        w.write_record(&header).expect("in-memory write");
        for r in &self.per_question {
            let mut row = vec![
                r.id.clone(),
                r.predicted.clone(),
                r.em.to_string(),
                format!("{:.6}", r.f1),
                r.pre_fusion_answer.clone(),
                r.ledger.total.to_string(),
                r.ledger.prompt_total.to_string(),
                r.ledger.completion_total.to_string(),
            ];
            row.extend(Stage::ALL.iter().map(|s| r.ledger.stage(*s).total_tokens.to_string()));
            row.push(r.ledger.estimated.to_string());
            row.push(r.error.clone().unwrap_or_default());
            w.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    /// `EM=<x> F1=<y> tokens=<z>`
    pub fn summary_line(&self) -> String {
        format!(
            "EM={:.4} F1={:.4} tokens={:.1}",
            self.aggregate.em, self.aggregate.f1, self.aggregate.mean_total_tokens
        )
    }
}

/// A report plus the trace of every question that ran to completion.
pub struct EvalRun {
    pub report: EvalReport,
    pub traces: Vec<Option<RunTrace>>,
}

fn score(example: &QaExample, outcome: &Result<RunTrace, EngineError>) -> EvalRecord {
    match outcome {
        Ok(trace) => EvalRecord {
            id: example.id.clone(),
            question: example.question.clone(),
            gold_answers: example.answers.clone(),
            predicted: trace.final_answer.clone(),
            em: exact_match(&trace.final_answer, &example.answers),
            f1: f1_score(&trace.final_answer, &example.answers),
            ledger: trace.ledger.clone(),
            pre_fusion_answer: trace.pre_fusion_answer.clone(),
            error: None,
        },
        Err(e) => EvalRecord {
            id: example.id.clone(),
            question: example.question.clone(),
            gold_answers: example.answers.clone(),
            predicted: UNKNOWN.to_string(),
            em: 0,
            f1: 0.0,
            ledger: TokenLedger::default(),
            pre_fusion_answer: UNKNOWN.to_string(),
            error: Some(e.to_string()),
        },
    }
}

fn run_one(example: &QaExample, pipeline: &Pipeline<'_>, model: &dyn ChatModel) -> Result<RunTrace, EngineError> {
    let query = Query::new(&example.id, &example.question).map_err(|e| EngineError::Internal(e.to_string()))?;
    pipeline.run(&query, model)
}

/// Runs every example through `pipeline`. A failed run scores zero and the sweep continues.
///
/// With `jobs > 1` questions run on worker threads; records keep dataset order either way.
pub fn run_eval(
    dataset: &[QaExample],
    pipeline: &Pipeline<'_>,
    model: &dyn ChatModel,
    jobs: usize,
    timer: &dyn Timer,
) -> EvalRun {
    let started = timer.now();
    let outcomes: Vec<Result<RunTrace, EngineError>> = if jobs <= 1 || dataset.len() <= 1 {
        dataset.iter().map(|ex| run_one(ex, pipeline, model)).collect()
    } else {
        let next = AtomicUsize::new(0);
        let slots: Mutex<Vec<Option<Result<RunTrace, EngineError>>>> =
            Mutex::new((0..dataset.len()).map(|_| None).collect());
        std::thread::scope(|scope| {
            for _ in 0..jobs.min(dataset.len()) {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= dataset.len() {
                        break;
                    }
                    let out = run_one(&dataset[i], pipeline, model);
                    slots.lock().unwrap()[i] = Some(out);
                });
            }
        });
        slots
            .into_inner()
            .unwrap()
            .into_iter()
            .map(|o| o.expect("every slot filled"))
            .collect()
    };
    let per_question: Vec<EvalRecord> = dataset.iter().zip(&outcomes).map(|(ex, o)| score(ex, o)).collect();
    let report = EvalReport {
        config: pipeline.config().clone(),
        aggregate: Aggregate::from_records(&per_question),
        fusion_effect: fusion_effect(&per_question),
        per_question,
        wall_time: timer.now() - started,
    };
    EvalRun {
        report,
        traces: outcomes.into_iter().map(Result::ok).collect(),
    }
}

/// The eight component settings of the ablation grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationSetting {
    Full,
    NoReflexion,
    NoRouting,
    NoDecomposition,
    DecompositionOnly,
    RoutingOnly,
    ReflexionOnly,
    Naive,
}

impl AblationSetting {
    pub const ALL: [AblationSetting; 8] = [
        AblationSetting::Full,
        AblationSetting::NoReflexion,
        AblationSetting::NoRouting,
        AblationSetting::NoDecomposition,
        AblationSetting::DecompositionOnly,
        AblationSetting::RoutingOnly,
        AblationSetting::ReflexionOnly,
        AblationSetting::Naive,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AblationSetting::Full => "full",
            AblationSetting::NoReflexion => "no_reflexion",
            AblationSetting::NoRouting => "no_routing",
            AblationSetting::NoDecomposition => "no_decomposition",
            AblationSetting::DecompositionOnly => "decomposition_only",
            AblationSetting::RoutingOnly => "routing_only",
            AblationSetting::ReflexionOnly => "reflexion_only",
            AblationSetting::Naive => "naive",
        }
    }

    /// `(decompose, use_routing, use_reflexion)`
    pub fn flags(self) -> (bool, bool, bool) {
        match self {
            AblationSetting::Full => (true, true, true),
            AblationSetting::NoReflexion => (true, true, false),
            AblationSetting::NoRouting => (true, false, true),
            AblationSetting::NoDecomposition => (false, true, true),
            AblationSetting::DecompositionOnly => (true, false, false),
            AblationSetting::RoutingOnly => (false, true, false),
            AblationSetting::ReflexionOnly => (false, false, true),
            AblationSetting::Naive => (false, false, false),
        }
    }

    pub fn apply(self, base: &PipelineConfig) -> PipelineConfig {
        let (decompose, use_routing, use_reflexion) = self.flags();
        PipelineConfig {
            decompose,
            use_routing,
            use_reflexion,
            ..base.clone()
        }
    }
}

impl fmt::Display for AblationSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AblationSetting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|a| a.as_str() == s.trim())
            .ok_or_else(|| {
                let names: Vec<&str> = Self::ALL.iter().map(|a| a.as_str()).collect();
                format!("unknown setting {s:?}; expected one of {}", names.join(", "))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub setting: AblationSetting,
    pub decompose: bool,
    pub use_routing: bool,
    pub use_reflexion: bool,
    /// `None` when the setting cannot run over this registry.
    pub aggregate: Option<Aggregate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unsupported: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["setting", "decompose", "routing", "reflexion", "status", "questions", "em", "f1", "mean_tokens"];
        header.extend(Stage::ALL.iter().map(|s| ledger_key(*s)));
        w.write_record(&header).expect("in-memory write");
        for r in &self.rows {
            let mut row = vec![
                r.setting.to_string(),
                r.decompose.to_string(),
                r.use_routing.to_string(),
                r.use_reflexion.to_string(),
            ];
            match &r.aggregate {
                Some(a) => {
                    row.push("ok".into());
                    row.push(a.questions.to_string());
                    row.push(format!("{:.4}", a.em));
                    row.push(format!("{:.4}", a.f1));
                    row.push(format!("{:.1}", a.mean_total_tokens));
                    row.extend(Stage::ALL.iter().map(|s| format!("{:.1}", a.mean_stage_tokens[ledger_key(*s)])));
                }
                None => {
                    row.push("unsupported".into());
                    row.extend(std::iter::repeat_n(String::new(), 4 + Stage::ALL.len()));
                }
            }
            w.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }
}

/// Shared knobs for evaluation sweeps.
#[derive(Clone)]
pub struct EvalOptions {
    pub base: PipelineConfig,
    pub prompts: PromptSet,
    pub timer: Arc<dyn Timer>,
    pub jobs: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            base: PipelineConfig::default(),
            prompts: PromptSet::default(),
            timer: Arc::new(SystemTimer::default()),
            jobs: 1,
        }
    }
}

/// Result of one sweep: the table plus each supported setting's full run.
pub struct AblationOutcome {
    pub table: AblationTable,
    pub runs: Vec<(AblationSetting, EvalRun)>,
}

/// Runs the dataset once per setting. Settings the registry cannot support are marked, not skipped.
pub fn ablate(
    dataset: &[QaExample],
    registry: &SourceRegistry,
    model: &dyn ChatModel,
    grid: &[AblationSetting],
    options: &EvalOptions,
) -> Result<AblationOutcome, EngineError> {
    let mut rows = Vec::with_capacity(grid.len());
    let mut runs = Vec::new();
    for &setting in grid {
        let config = setting.apply(&options.base);
        let (decompose, use_routing, use_reflexion) = setting.flags();
        let mut row = AblationRow {
            setting,
            decompose,
            use_routing,
            use_reflexion,
            aggregate: None,
            unsupported: None,
        };
        match Pipeline::new(registry, config) {
            Ok(p) => {
                let pipeline = p.with_prompts(options.prompts.clone()).with_timer(options.timer.clone());
                let run = run_eval(dataset, &pipeline, model, options.jobs, options.timer.as_ref());
                row.aggregate = Some(run.report.aggregate.clone());
                runs.push((setting, run));
            }
            Err(EngineError::Source(e)) => row.unsupported = Some(e.to_string()),
            Err(e) => return Err(e),
        }
        rows.push(row);
    }
    Ok(AblationOutcome {
        table: AblationTable { rows },
        runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(pre: &str, predicted: &str, gold: &str, total: u64) -> EvalRecord {
        let mut ledger = TokenLedger::default();
        ledger.record(Stage::Extraction, &crate::ledger::TokenCount::new(total, 0));
        EvalRecord {
            id: predicted.into(),
            question: "q".into(),
            gold_answers: vec![gold.into()],
            predicted: predicted.into(),
            em: exact_match(predicted, &[gold.to_string()]),
            f1: f1_score(predicted, &[gold.to_string()]),
            ledger,
            pre_fusion_answer: pre.into(),
            error: None,
        }
    }

    #[test]
    fn fusion_effect_partitions() {
        let recs = vec![
            record("x", "Paris", "Paris", 1),
            record("Paris", "Paris", "Paris", 1),
            record("Paris", "x", "Paris", 1),
            record("x", "y", "Paris", 1),
        ];
        let fx = fusion_effect(&recs);
        assert_eq!(
            fx,
            FusionEffect {
                fixed: 1,
                corrupted: 1,
                unchanged_right: 1,
                unchanged_wrong: 1
            }
        );
        assert_eq!(fx.total(), 4);
    }

    #[test]
    fn aggregate_is_mean_and_order_free() {
        let mut recs = vec![record("a", "Paris", "Paris", 10), record("a", "Lyon", "Paris", 15), record("a", "Paris Lyon", "Paris", 4)];
        let a = Aggregate::from_records(&recs);
        assert_eq!(a.em_hits, 1);
        assert_eq!(a.token_sum, 29);
        assert_eq!(a.mean_total_tokens, 29.0 / 3.0);
        recs.reverse();
        assert_eq!(Aggregate::from_records(&recs), a);
    }

    #[test]
    fn settings_round_trip() {
        for s in AblationSetting::ALL {
            assert_eq!(s.as_str().parse::<AblationSetting>().unwrap(), s);
        }
        assert!("everything".parse::<AblationSetting>().is_err());
        assert_eq!(AblationSetting::Naive.flags(), (false, false, false));
    }
}
