//! Prompt templates and their builders.
//!
//! Templates are plain text with `{name}` slots. The built-in set is
//! compiled in from `prompts/*.txt`; any of them can be replaced at runtime
//! by dropping a file with the same name into an override directory.

use super::StageError;
use crate::dag::Query;
use crate::memory::AttemptRecord;
use crate::sources::SqlSchemaCard;
use std::path::Path;

/// Evidence longer than this many characters is cut before it reaches a prompt.
pub const EVIDENCE_CHAR_LIMIT: usize = 8000;
pub const TRUNCATION_MARKER: &str = "\n[... evidence truncated ...]";
pub const NO_EVIDENCE: &str = "(no evidence)";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    pub decomposition: String,
    pub routing: String,
    pub extraction: String,
    pub reflexion: String,
    pub fusion: String,
    pub sql: String,
    pub partition: String,
}

impl Default for PromptSet {
    fn default() -> Self {
        Self {
            decomposition: include_str!("../../prompts/decomposition.txt").to_string(),
            routing: include_str!("../../prompts/routing.txt").to_string(),
            extraction: include_str!("../../prompts/extraction.txt").to_string(),
            reflexion: include_str!("../../prompts/reflexion.txt").to_string(),
            fusion: include_str!("../../prompts/fusion.txt").to_string(),
            sql: include_str!("../../prompts/sql.txt").to_string(),
            partition: include_str!("../../prompts/partition.txt").to_string(),
        }
    }
}

/// Everything the router sees for one decision.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoutingContext {
    pub subquery_text: String,
    /// `(name, profile)` in registry order.
    pub sources: Vec<(String, String)>,
    /// Sources that already failed for this subquery.
    pub excluded: Vec<String>,
}

impl RoutingContext {
    pub fn available(&self) -> Vec<&str> {
        self.sources
            .iter()
            .map(|(n, _)| n.as_str())
            .filter(|n| !self.excluded.iter().any(|e| e == n))
            .collect()
    }
}

/// Single-pass `{slot}` substitution; inserted values are never rescanned.
pub fn render_template(template: &str, slots: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let close = after.find('}');
        let matched = close.and_then(|c| {
            let name = &after[..c];
            slots.iter().find(|(k, _)| *k == name).map(|(_, v)| (c, *v))
        });
        match matched {
            Some((c, value)) => {
                out.push_str(value);
                rest = &after[c + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

/// Caps evidence at [`EVIDENCE_CHAR_LIMIT`] characters, keeping the head.
pub fn clip_evidence(evidence: &str) -> String {
    if evidence.trim().is_empty() {
        return NO_EVIDENCE.to_string();
    }
    match evidence.char_indices().nth(EVIDENCE_CHAR_LIMIT) {
        Some((cut, _)) => format!("{}{}", &evidence[..cut], TRUNCATION_MARKER),
        None => evidence.to_string(),
    }
}

fn one_word_choices(names: &[&str]) -> String {
    match names {
        [] => String::new(),
        [only] => (*only).to_string(),
        [init @ .., last] => format!("{} or {}", init.join(", "), last),
    }
}

impl PromptSet {
    /// Loads the built-in set, replacing any template that has a `<name>.txt` file in `dir`.
    pub fn with_overrides(dir: &Path) -> std::io::Result<Self> {
        let mut set = Self::default();
        let slots: [(&str, &mut String); 7] = [
            ("decomposition", &mut set.decomposition),
            ("routing", &mut set.routing),
            ("extraction", &mut set.extraction),
            ("reflexion", &mut set.reflexion),
            ("fusion", &mut set.fusion),
            ("sql", &mut set.sql),
            ("partition", &mut set.partition),
        ];
        for (name, slot) in slots {
            let path = dir.join(format!("{name}.txt"));
            if path.exists() {
                *slot = std::fs::read_to_string(&path)?;
            }
        }
        Ok(set)
    }

    pub fn decomposition_prompt(&self, query: &Query) -> Result<String, StageError> {
        if query.text.trim().is_empty() {
            return Err(StageError::EmptyQuery);
        }
        Ok(render_template(&self.decomposition, &[("query", query.text.trim())]))
    }

    pub fn routing_prompt(&self, ctx: &RoutingContext) -> Result<String, StageError> {
        let available = ctx.available();
        if available.is_empty() {
            return Err(StageError::RoutingExhausted);
        }
        let listing = ctx
            .sources
            .iter()
            .filter(|(n, _)| available.contains(&n.as_str()))
            .map(|(n, p)| format!("- {n}: {}", p.trim()))
            .collect::<Vec<_>>()
            .join("\n");
        let failed = if ctx.excluded.is_empty() {
            String::new()
        } else {
            format!(
                "Already tried for this query without success: {}\n\n",
                ctx.excluded.join(", ")
            )
        };
        Ok(render_template(
            &self.routing,
            &[
                ("sources", &listing),
                ("failed", &failed),
                ("query", ctx.subquery_text.trim()),
                ("choices", &one_word_choices(&available)),
            ],
        ))
    }

    pub fn extraction_prompt(&self, subquery: &str, raw_evidence: &str) -> String {
        render_template(
            &self.extraction,
            &[("question", subquery.trim()), ("evidence", &clip_evidence(raw_evidence))],
        )
    }

    pub fn reflexion_prompt(&self, failed_query: &str, failed_result: &str) -> String {
        let result = if failed_result.trim().is_empty() {
            NO_EVIDENCE
        } else {
            failed_result.trim()
        };
        render_template(
            &self.reflexion,
            &[("failed_query", failed_query.trim()), ("failed_result", result)],
        )
    }

    /// Renders the question and the numbered sub-QA chain. `successes` must already be in plan order.
    pub fn fusion_prompt(&self, query: &Query, successes: &[&AttemptRecord]) -> String {
        let chain = successes
            .iter()
            .enumerate()
            .map(|(i, r)| format!("{}. {} → {}", i + 1, r.resolved_text.trim(), r.extracted_answer.trim()))
            .collect::<Vec<_>>()
            .join("\n");
        render_template(&self.fusion, &[("question", query.text.trim()), ("chain", &chain)])
    }

    pub fn sql_prompt(&self, schema: &SqlSchemaCard, subquery: &str) -> String {
        let columns = schema
            .columns
            .iter()
            .map(|c| {
                if c.description.is_empty() {
                    format!("- {} ({})", c.name, c.type_tag)
                } else {
                    format!("- {} ({}): {}", c.name, c.type_tag, c.description)
                }
            })
            .collect::<Vec<_>>()
            .join("\n");
        render_template(
            &self.sql,
            &[("table", &schema.table), ("columns", &columns), ("question", subquery.trim())],
        )
    }

    pub fn partition_prompt(&self, local_profile: &str, global_profile: &str, passage: &str) -> String {
        render_template(
            &self.partition,
            &[
                ("local_profile", local_profile.trim()),
                ("global_profile", global_profile.trim()),
                ("passage", &clip_evidence(passage)),
            ],
        )
    }
}

pub fn build_decomposition_prompt(query: &Query) -> Result<String, StageError> {
    PromptSet::default().decomposition_prompt(query)
}

pub fn build_routing_prompt(ctx: &RoutingContext) -> Result<String, StageError> {
    PromptSet::default().routing_prompt(ctx)
}

pub fn build_extraction_prompt(subquery: &str, raw_evidence: &str) -> String {
    PromptSet::default().extraction_prompt(subquery, raw_evidence)
}

pub fn build_reflexion_prompt(failed_query: &str, failed_result: &str) -> String {
    PromptSet::default().reflexion_prompt(failed_query, failed_result)
}

pub fn build_fusion_prompt(query: &Query, successes: &[&AttemptRecord]) -> String {
    PromptSet::default().fusion_prompt(query, successes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::TokenCount;

    const LOCAL: &str = "people and entity-specific information.";
    const GLOBAL: &str = "general world knowledge including geography, history, etc.";

    fn ctx(excluded: &[&str]) -> RoutingContext {
        RoutingContext {
            subquery_text: "What state is Montebello located in?".into(),
            sources: vec![("local".into(), LOCAL.into()), ("global".into(), GLOBAL.into())],
            excluded: excluded.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn decomposition_prompt_carries_query_and_constraints() {
        let q = Query::new("q", "Who succeeded the Prime Minister that resigned during the Brexit vote?").unwrap();
        let p = build_decomposition_prompt(&q).unwrap();
        assert!(p.starts_with("You are a question planner."));
        assert!(p.contains("Original Query: Who succeeded the Prime Minister that resigned during the Brexit vote?"));
        assert!(p.contains("#k"));
        assert!(p.contains("Only output the list of subquestions in order. Do not include explanations."));
        let blank = Query {
            id: "x".into(),
            text: "  ".into(),
        };
        assert_eq!(build_decomposition_prompt(&blank), Err(StageError::EmptyQuery));
    }

    #[test]
    fn routing_prompt_lists_all_sources() {
        let p = build_routing_prompt(&ctx(&[])).unwrap();
        let expected = format!(
            "You are a routing assistant. Your task is to decide whether a query should be answered using which tool-data pair.\n\n\
             Available Pairs:\n- local: {LOCAL}\n- global: {GLOBAL}\n\n\
             Query: What state is Montebello located in?\n\n\
             Please output only one word: local or global. Do not explain your choice.\n"
        );
        assert_eq!(p, expected);
    }

    #[test]
    fn routing_prompt_drops_excluded_and_notes_failure() {
        let p = build_routing_prompt(&ctx(&["local"])).unwrap();
        assert!(!p.contains("- local:"));
        assert!(p.contains("- global: "));
        assert!(p.contains("Already tried for this query without success: local"));
        assert!(p.contains("Please output only one word: global."));
    }

    #[test]
    fn routing_prompt_exhausted() {
        assert_eq!(build_routing_prompt(&ctx(&["local", "global"])), Err(StageError::RoutingExhausted));
    }

    #[test]
    fn choices_phrase() {
        assert_eq!(one_word_choices(&["a"]), "a");
        assert_eq!(one_word_choices(&["a", "b", "c"]), "a, b or c");
    }

    #[test]
    fn extraction_prompt_embeds_question_and_evidence() {
        let p = build_extraction_prompt("What state is Montebello in?", "Montebello is located in New York.");
        assert!(p.contains("Question: What state is Montebello in?"));
        assert!(p.contains("Evidence:\nMontebello is located in New York.\n"));
        assert!(p.contains("ANSWER: <short answer or UNKNOWN>\nSUCCESS: <yes|no>"));
        assert!(build_extraction_prompt("Q?", "").contains(NO_EVIDENCE));
    }

    #[test]
    fn evidence_truncation_boundary() {
        let exact: String = "a".repeat(EVIDENCE_CHAR_LIMIT);
        assert_eq!(clip_evidence(&exact), exact);
        let long: String = "é".repeat(EVIDENCE_CHAR_LIMIT + 1);
        let clipped = clip_evidence(&long);
        assert!(clipped.ends_with(TRUNCATION_MARKER));
        let head = clipped.strip_suffix(TRUNCATION_MARKER).unwrap();
        assert_eq!(head.chars().count(), EVIDENCE_CHAR_LIMIT);
        let p = build_extraction_prompt("Q?", &long);
        assert!(p.contains(TRUNCATION_MARKER));
    }

    #[test]
    fn reflexion_prompt_layout() {
        let p = build_reflexion_prompt(
            "What is one of the stars of \"The Newcomers\" known for?",
            "Dano is an indie film actor.",
        );
        assert!(p.contains("Failed Query: What is one of the stars of \"The Newcomers\" known for?"));
        assert!(p.contains("Failed Result: Dano is an indie film actor. (not grounded)"));
        assert!(p.trim_end().ends_with("Reflected Subquestion:"));
        assert!(build_reflexion_prompt("q", "  ").contains("Failed Result: (no evidence) (not grounded)"));
    }

    fn success(index: usize, q: &str, a: &str) -> AttemptRecord {
        AttemptRecord {
            subquery_index: index,
            resolved_text: q.into(),
            source_name: "global".into(),
            raw_evidence: String::new(),
            extracted_answer: a.into(),
            success: true,
            attempt_number: 1,
            tokens: TokenCount::default(),
        }
    }

    #[test]
    fn fusion_prompt_renders_chain() {
        let q = Query::new("q", "What country is the birthplace of Erik Hort a part of?").unwrap();
        let recs = [
            success(1, "Who was born in Montebello?", "Erik Hort"),
            success(2, "What state is Montebello in?", "New York"),
            success(3, "What country is New York in?", "United States"),
        ];
        let refs: Vec<&AttemptRecord> = recs.iter().collect();
        let p = build_fusion_prompt(&q, &refs);
        assert!(p.contains("Be concise and faithful to the evidence."));
        assert!(p.contains(
            "Sub-QA Chain:\n1. Who was born in Montebello? → Erik Hort\n2. What state is Montebello in? → New York\n3. What country is New York in? → United States\n"
        ));
        let single = build_fusion_prompt(&q, &refs[..1]);
        assert!(single.contains("Sub-QA Chain:\n1. Who was born in Montebello? → Erik Hort\n\nFinal Answer:"));
    }

    #[test]
    fn fusion_keeps_conflicts() {
        let q = Query::new("q", "Where?").unwrap();
        let recs = [success(1, "Where?", "Paris"), success(2, "Where really?", "Lyon")];
        let refs: Vec<&AttemptRecord> = recs.iter().collect();
        let p = build_fusion_prompt(&q, &refs);
        assert!(p.contains("→ Paris") && p.contains("→ Lyon"));
    }

    #[test]
    fn template_values_are_not_rescanned() {
        let out = render_template("A {x} B {y} {unknown} {", &[("x", "{y}"), ("y", "Y")]);
        assert_eq!(out, "A {y} B Y {unknown} {");
    }

    #[test]
    fn overrides_replace_named_templates() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("fusion.txt"), "FUSE {question}").unwrap();
        let set = PromptSet::with_overrides(dir.path()).unwrap();
        assert_eq!(set.fusion, "FUSE {question}");
        assert_eq!(set.routing, PromptSet::default().routing);
    }
}
