//! Parsers for the model's replies to each prompt family.

use super::StageError;
use crate::dag::{placeholder_refs, placeholder_regex, SubqueryDag, SubqueryNode};
use crate::memory::Memory;
use regex::Regex;
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

pub const UNKNOWN: &str = "UNKNOWN";

fn numbered_line() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    // "1. x", "1) x", "1 - x", "Q1: x", "**1.** x"
    RE.get_or_init(|| Regex::new(r"^\s*(?:[-*]\s*)?\**\s*(?:[Qq])?(\d+)\s*(?:[.):]|\s-)\**\s*(.+?)\s*$").expect("static regex"))
}

/// Builds a plan from numbered lines.
///
/// Dependencies come from `#k` placeholders. When no line has a placeholder,
/// the plan is a sequential chain (every node depends on its predecessor).
pub fn parse_subqueries(response: &str) -> Result<SubqueryDag, StageError> {
    let texts: Vec<String> = response
        .lines()
        .filter_map(|line| numbered_line().captures(line))
        .map(|cap| cap[2].trim().to_string())
        .filter(|t| !t.is_empty())
        .collect();
    if texts.is_empty() {
        return Err(StageError::DecompositionParse("no numbered subquestions found".into()));
    }
    let any_placeholder = texts.iter().any(|t| placeholder_regex().is_match(t));
    let nodes = texts
        .into_iter()
        .enumerate()
        .map(|(i, template)| {
            let index = i + 1;
            let deps: Vec<usize> = if any_placeholder {
                placeholder_refs(&template)
            } else if index > 1 {
                vec![index - 1]
            } else {
                Vec::new()
            };
            SubqueryNode::new(index, template, deps)
        })
        .collect();
    let dag = SubqueryDag::new(nodes);
    dag.validate().map_err(|violations| {
        StageError::DecompositionParse(
            violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "),
        )
    })?;
    Ok(dag)
}

/// Replaces every `#k` with the answer recorded for subquery `k`.
pub fn substitute_variables(node: &SubqueryNode, memory: &Memory) -> Result<String, StageError> {
    for &dep in &node.depends_on {
        if memory.answer_for(dep).is_none() {
            return Err(StageError::DependencyUnresolved { node: node.index, missing: dep });
        }
    }
    let mut missing = None;
    let resolved = placeholder_regex().replace_all(&node.template, |cap: &regex::Captures<'_>| {
        let k = cap[1].parse::<usize>().unwrap_or(0);
        match memory.answer_for(k) {
            Some(answer) => answer.trim().to_string(),
            None => {
                missing.get_or_insert(k);
                cap[0].to_string()
            }
        }
    });
    match missing {
        Some(k) => Err(StageError::DependencyUnresolved { node: node.index, missing: k }),
        None => Ok(resolved.into_owned()),
    }
}

/// Picks a source name out of a router reply. Never returns a name outside `available`.
pub fn parse_route(response: &str, available: &[&str]) -> Result<String, StageError> {
    let folded = response.trim().to_lowercase();
    if let Some(name) = available.iter().find(|n| n.to_lowercase() == folded) {
        return Ok((*name).to_string());
    }
    // earliest mention wins; on equal position prefer the longer name
    available
        .iter()
        .filter_map(|n| folded.find(&n.to_lowercase()).map(|pos| (pos, std::cmp::Reverse(n.len()), *n)))
        .min()
        .map(|(_, _, n)| n.to_string())
        .ok_or_else(|| StageError::RouteParse(response.trim().to_string()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionVerdict {
    pub answer: String,
    pub success: bool,
}

fn field<'a>(line: &'a str, key: &str) -> Option<&'a str> {
    let stripped = line.trim().trim_start_matches(['*', '-', ' ']);
    let head = stripped.get(..key.len())?;
    if head.eq_ignore_ascii_case(key) {
        Some(stripped[key.len()..].trim().trim_matches('*').trim())
    } else {
        None
    }
}

fn is_unknown(answer: &str) -> bool {
    let a = answer.trim().trim_end_matches('.').trim();
    a.is_empty() || a.eq_ignore_ascii_case(UNKNOWN)
}

/// Reads the `ANSWER:` / `SUCCESS:` pair. Success requires an explicit yes and a real answer.
pub fn parse_answer_success(response: &str) -> ExtractionVerdict {
    let mut answer = None;
    let mut said_yes = None;
    for line in response.lines() {
        if let Some(a) = field(line, "ANSWER:") {
            answer.get_or_insert_with(|| a.to_string());
        } else if let Some(s) = field(line, "SUCCESS:") {
            let s = s.to_lowercase();
            said_yes.get_or_insert(s.starts_with("yes") || s.starts_with("true"));
        }
    }
    match (answer, said_yes) {
        (None, None) => ExtractionVerdict {
            answer: response.trim().to_string(),
            success: false,
        },
        (answer, yes) => {
            let answer = answer.unwrap_or_default();
            let success = yes.unwrap_or(false) && !is_unknown(&answer);
            ExtractionVerdict { answer, success }
        }
    }
}

fn after_last_marker<'a>(response: &'a str, marker: &str) -> Option<&'a str> {
    let lower = response.to_lowercase();
    let marker = marker.to_lowercase();
    // lowercase can change byte lengths for some scripts; only trust the match
    // position when it maps onto the original text
    if lower.len() != response.len() {
        return response.rfind(marker.as_str()).map(|p| &response[p + marker.len()..]);
    }
    lower.rfind(&marker).map(|p| &response[p + marker.len()..])
}

fn strip_quotes(text: &str) -> &str {
    text.trim().trim_matches(|c| c == '`' || c == '"').trim()
}

/// Text after the last `Reflected Subquestion:` marker, else the whole reply.
pub fn parse_reflected_subquestion(response: &str) -> Result<String, StageError> {
    let text = match after_last_marker(response, "Reflected Subquestion:") {
        Some(rest) => rest.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or(""),
        None => response.trim(),
    };
    let text = strip_quotes(text);
    if text.is_empty() {
        Err(StageError::ReflexionParse)
    } else {
        Ok(text.to_string())
    }
}

/// Text after the last `Final Answer:` marker, else the whole reply. `None` when empty.
pub fn parse_final_answer(response: &str) -> Option<String> {
    let text = after_last_marker(response, "Final Answer:").unwrap_or(response);
    let text = strip_quotes(text);
    (!text.is_empty()).then(|| text.to_string())
}
