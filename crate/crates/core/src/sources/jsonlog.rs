use super::embed::tokenize;
use super::{Passage, RetrieveContext, Retriever, SourceError, SourceKind};
use std::collections::BTreeSet;
use std::path::Path;

/// Semi-structured activity log: one flat JSON object per line, scored by token overlap.
#[derive(Debug)]
pub struct JsonLog {
    records: Vec<String>,
    tokens: Vec<BTreeSet<String>>,
}

fn serialize_record(obj: &serde_json::Map<String, serde_json::Value>) -> String {
    obj.iter()
        .map(|(k, v)| match v {
            serde_json::Value::String(s) => format!("{k}={s}"),
            other => format!("{k}={other}"),
        })
        .collect::<Vec<_>>()
        .join("; ")
}

impl JsonLog {
    /// Parses the log eagerly so bad input fails at load time, never at query time.
    pub fn parse(text: &str, origin: &str) -> Result<Self, SourceError> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let value: serde_json::Value = serde_json::from_str(line).map_err(|e| SourceError::Ingestion {
                path: origin.to_string(),
                message: format!("line {}: {e}", i + 1),
            })?;
            match value {
                serde_json::Value::Object(obj) => records.push(serialize_record(&obj)),
                _ => {
                    return Err(SourceError::Ingestion {
                        path: origin.to_string(),
                        message: format!("line {}: expected a JSON object", i + 1),
                    })
                }
            }
        }
        let tokens = records.iter().map(|r| tokenize(r).into_iter().collect()).collect();
        Ok(Self { records, tokens })
    }

    pub fn load(path: &Path) -> Result<Self, SourceError> {
        let text = std::fs::read_to_string(path).map_err(|e| SourceError::Ingestion {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn records(&self) -> &[String] {
        &self.records
    }

    /// Top-`k` records by number of distinct query tokens they contain; ties keep file order.
    pub fn search(&self, query: &str, k: usize) -> Result<Vec<Passage>, SourceError> {
        if self.records.is_empty() {
            return Err(SourceError::EmptyCorpus);
        }
        if k == 0 {
            return Err(SourceError::ZeroDepth);
        }
        let query_tokens: BTreeSet<String> = tokenize(query).into_iter().collect();
        let mut scored: Vec<(usize, usize)> = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.intersection(&query_tokens).count(), i))
            .collect();
        scored.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        Ok(scored
            .into_iter()
            .take(k)
            .map(|(overlap, i)| Passage {
                id: format!("record-{}", i + 1),
                title: String::new(),
                text: self.records[i].clone(),
                score: overlap as f64,
            })
            .collect())
    }
}

impl Retriever for JsonLog {
    fn kind(&self) -> SourceKind {
        SourceKind::JsonLog
    }

    fn retrieve(&self, query: &str, top_k: usize, _ctx: &mut RetrieveContext<'_>) -> Result<Vec<Passage>, SourceError> {
        self.search(query, top_k)
    }
}

/// Free-function form of [`JsonLog::search`].
pub fn json_retrieve(log: &JsonLog, query: &str, k: usize) -> Result<Vec<Passage>, SourceError> {
    log.search(query, k)
}
