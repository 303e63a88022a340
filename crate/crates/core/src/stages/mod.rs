//! Prompt builders and reply parsers for the decomposition, routing,
//! extraction, reflexion and fusion stages. Everything here is pure.

mod parse;
mod prompts;

pub use parse::{
    parse_answer_success, parse_final_answer, parse_reflected_subquestion, parse_route, parse_subqueries,
    substitute_variables, ExtractionVerdict, UNKNOWN,
};
pub use prompts::{
    build_decomposition_prompt, build_extraction_prompt, build_fusion_prompt, build_reflexion_prompt,
    build_routing_prompt, clip_evidence, render_template, PromptSet, RoutingContext, EVIDENCE_CHAR_LIMIT,
    NO_EVIDENCE, TRUNCATION_MARKER,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StageError {
    #[error("query text is empty")]
    EmptyQuery,
    #[error("could not parse decomposition: {0}")]
    DecompositionParse(String),
    #[error("subquery {node} depends on unresolved subquery {missing}")]
    DependencyUnresolved { node: usize, missing: usize },
    #[error("every source has already failed for this subquery")]
    RoutingExhausted,
    #[error("router reply names no available source: {0:?}")]
    RouteParse(String),
    #[error("reflexion produced an empty subquestion")]
    ReflexionParse,
}
