use super::{
    JsonLog, Segment, SourceDescriptor, SourceError, SourceKind, SourceRegistry, SqlColumn, SqlSchemaCard, SqlTable,
    VectorCorpus, DEFAULT_DIMENSION, DEFAULT_ROW_LIMIT,
};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

/// Backend settings. Paths are resolved against the registry file's directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceParams {
    pub path: PathBuf,
    /// Vector corpora only: keep documents of this segment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segment: Option<Segment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimension: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub row_limit: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub columns: Vec<SqlColumn>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceEntry {
    pub name: String,
    pub kind: SourceKind,
    pub profile: String,
    pub params: SourceParams,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegistryFile {
    pub sources: Vec<SourceEntry>,
}

impl RegistryFile {
    pub fn parse(text: &str) -> Result<Self, SourceError> {
        toml::from_str(text).map_err(|e| SourceError::Config(e.to_string()))
    }

    /// Builds every backend; `base` anchors relative paths.
    pub fn build(&self, base: &Path) -> Result<SourceRegistry, SourceError> {
        if self.sources.is_empty() {
            return Err(SourceError::NoSources);
        }
        let mut registry = SourceRegistry::new();
        for entry in &self.sources {
            let path = base.join(&entry.params.path);
            let backend: Arc<dyn super::Retriever> = match entry.kind {
                SourceKind::VectorCorpus => {
                    let mut docs = super::load_corpus(&path)?;
                    if let Some(seg) = entry.params.segment {
                        docs.retain(|d| d.segment == seg);
                    }
                    let dim = entry.params.dimension.unwrap_or(DEFAULT_DIMENSION);
                    if dim == 0 {
                        return Err(SourceError::Config(format!("{}: dimension must be positive", entry.name)));
                    }
                    Arc::new(VectorCorpus::with_hash_embedder(docs, dim)?)
                }
                SourceKind::JsonLog => Arc::new(JsonLog::load(&path)?),
                SourceKind::SqlTable => {
                    let table = entry
                        .params
                        .table
                        .as_deref()
                        .ok_or_else(|| SourceError::Config(format!("{}: sql_table needs params.table", entry.name)))?;
                    let card = (!entry.params.columns.is_empty()).then(|| SqlSchemaCard {
                        table: table.to_string(),
                        columns: entry.params.columns.clone(),
                    });
                    Arc::new(SqlTable::open(
                        &path,
                        table,
                        card,
                        entry.params.row_limit.unwrap_or(DEFAULT_ROW_LIMIT),
                    )?)
                }
                SourceKind::Merged => {
                    return Err(SourceError::Config(format!(
                        "{}: merged views are derived, not declared",
                        entry.name
                    )))
                }
            };
            let mut params = BTreeMap::new();
            if let serde_json::Value::Object(map) = serde_json::to_value(&entry.params).expect("params serialize") {
                params.extend(map);
            }
            let descriptor = SourceDescriptor {
                name: entry.name.clone(),
                kind: entry.kind,
                profile: entry.profile.clone(),
                params,
            };
            registry.register(descriptor, backend)?;
        }
        Ok(registry)
    }
}

/// Reads a registry file and builds all its sources.
pub fn load_registry(path: &Path) -> Result<SourceRegistry, SourceError> {
    let text = std::fs::read_to_string(path).map_err(|e| SourceError::Ingestion {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let file = RegistryFile::parse(&text)?;
    file.build(path.parent().unwrap_or(Path::new(".")))
}
