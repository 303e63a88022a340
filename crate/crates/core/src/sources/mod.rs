//! Knowledge sources: the registry the router chooses from, and the
//! backends behind it.
//!
//! Each source is a descriptor (name, kind, router-visible profile) bound to
//! a [`Retriever`]. Text corpora can be unioned into one flat corpus for
//! runs without routing; structured backends cannot.

mod embed;
mod jsonlog;
mod registry_file;
mod sql;
mod vector;

pub use embed::{cosine, tokenize, Embedder, EmbeddingVector, HashEmbedder, DEFAULT_DIMENSION};
pub use jsonlog::{json_retrieve, JsonLog};
pub use registry_file::{load_registry, RegistryFile, SourceEntry, SourceParams};
pub use sql::{classify_statement, extract_sql, sql_retrieve, SqlColumn, SqlSchemaCard, SqlTable, DEFAULT_ROW_LIMIT};
pub use vector::{load_corpus, read_corpus, vector_retrieve, write_corpus, CorpusDocument, Segment, VectorCorpus};

use crate::ledger::Stage;
use crate::llm::LlmError;
use crate::stages::PromptSet;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    VectorCorpus,
    SqlTable,
    JsonLog,
    Merged,
}

impl fmt::Display for SourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SourceKind::VectorCorpus => "vector_corpus",
            SourceKind::SqlTable => "sql_table",
            SourceKind::JsonLog => "json_log",
            SourceKind::Merged => "merged",
        })
    }
}

/// A named (tool, corpus) pair as the router sees it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceDescriptor {
    pub name: String,
    pub kind: SourceKind,
    pub profile: String,
    #[serde(default)]
    pub params: BTreeMap<String, serde_json::Value>,
}

impl SourceDescriptor {
    pub fn new(name: impl Into<String>, kind: SourceKind, profile: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind,
            profile: profile.into(),
            params: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Passage {
    pub id: String,
    pub title: String,
    pub text: String,
    pub score: f64,
}

/// Ranked passages from one source; scores never increase down the list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub source_name: String,
    pub passages: Vec<Passage>,
}

impl RetrievalResult {
    /// Evidence text handed to the extraction prompt.
    pub fn evidence(&self) -> String {
        self.passages
            .iter()
            .filter(|p| !p.text.trim().is_empty())
            .map(|p| {
                if p.title.trim().is_empty() {
                    p.text.trim().to_string()
                } else {
                    format!("{}: {}", p.title.trim(), p.text.trim())
                }
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SourceError {
    #[error("source {0:?} is already registered")]
    DuplicateName(String),
    #[error("source {0:?} has an empty profile")]
    EmptyProfile(String),
    #[error("unknown source {0:?}")]
    UnknownSource(String),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("retrieval depth must be at least 1")]
    ZeroDepth,
    #[error("cannot merge {name:?} ({kind}) into a flat corpus")]
    UnsupportedMerge { name: String, kind: SourceKind },
    #[error("registry has no sources")]
    NoSources,
    #[error("ingestion failed for {path}: {message}")]
    Ingestion { path: String, message: String },
    #[error("duplicate document id {0:?}")]
    DuplicateDocument(String),
    #[error("generated SQL rejected: {0}")]
    SqlGuard(String),
    #[error("backend error: {0}")]
    Backend(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("invalid registry: {0}")]
    Config(String),
}

/// Chat access for backends that need the model (e.g. SQL translation).
pub trait LlmCall {
    fn call(&mut self, stage: Stage, prompt: &str) -> Result<String, LlmError>;
}

pub struct RetrieveContext<'a> {
    pub llm: &'a mut dyn LlmCall,
    pub prompts: &'a PromptSet,
}

/// A retrieval tool bound to its data.
pub trait Retriever: Send + Sync {
    fn kind(&self) -> SourceKind;

    fn retrieve(&self, query: &str, top_k: usize, ctx: &mut RetrieveContext<'_>) -> Result<Vec<Passage>, SourceError>;

    /// Present only for flat text corpora, which are the only mergeable kind.
    fn as_vector_corpus(&self) -> Option<&VectorCorpus> {
        None
    }
}

#[derive(Clone)]
pub struct RegisteredSource {
    pub descriptor: SourceDescriptor,
    pub backend: Arc<dyn Retriever>,
}

impl fmt::Debug for RegisteredSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RegisteredSource").field("descriptor", &self.descriptor).finish()
    }
}

impl RegisteredSource {
    pub fn retrieve(&self, query: &str, top_k: usize, ctx: &mut RetrieveContext<'_>) -> Result<RetrievalResult, SourceError> {
        if top_k == 0 {
            return Err(SourceError::ZeroDepth);
        }
        let passages = self.backend.retrieve(query, top_k, ctx)?;
        Ok(RetrievalResult {
            source_name: self.descriptor.name.clone(),
            passages,
        })
    }
}

/// Routable sources in insertion order.
#[derive(Debug, Clone, Default)]
pub struct SourceRegistry {
    entries: Vec<RegisteredSource>,
}

impl SourceRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, descriptor: SourceDescriptor, backend: Arc<dyn Retriever>) -> Result<(), SourceError> {
        if self.get(&descriptor.name).is_some() {
            return Err(SourceError::DuplicateName(descriptor.name));
        }
        if descriptor.profile.trim().is_empty() {
            return Err(SourceError::EmptyProfile(descriptor.name));
        }
        self.entries.push(RegisteredSource { descriptor, backend });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&RegisteredSource> {
        self.entries.iter().find(|e| e.descriptor.name == name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &RegisteredSource> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.descriptor.name.as_str()).collect()
    }

    /// `(name, profile)` pairs for the routing prompt.
    pub fn profiles(&self) -> Vec<(String, String)> {
        self.entries
            .iter()
            .map(|e| (e.descriptor.name.clone(), e.descriptor.profile.clone()))
            .collect()
    }

    /// Name of the first source that cannot be merged, if any.
    pub fn non_mergeable(&self) -> Option<&SourceDescriptor> {
        self.entries
            .iter()
            .find(|e| e.backend.as_vector_corpus().is_none())
            .map(|e| &e.descriptor)
    }

    /// Unions every registered text corpus into one flat source.
    pub fn merged_view(&self) -> Result<RegisteredSource, SourceError> {
        if self.entries.is_empty() {
            return Err(SourceError::NoSources);
        }
        let mut parts = Vec::with_capacity(self.entries.len());
        for e in &self.entries {
            match e.backend.as_vector_corpus() {
                Some(c) => parts.push(c),
                None => {
                    return Err(SourceError::UnsupportedMerge {
                        name: e.descriptor.name.clone(),
                        kind: e.descriptor.kind,
                    })
                }
            }
        }
        let merged = VectorCorpus::union(&parts)?;
        let descriptor = SourceDescriptor::new(
            "merged",
            SourceKind::Merged,
            format!("Union of: {}", self.names().join(", ")),
        );
        Ok(RegisteredSource {
            descriptor,
            backend: Arc::new(merged),
        })
    }
}

/// Free-function form of [`SourceRegistry::merged_view`].
pub fn merged_view(registry: &SourceRegistry) -> Result<RegisteredSource, SourceError> {
    registry.merged_view()
}
