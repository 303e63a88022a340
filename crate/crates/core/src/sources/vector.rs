use super::embed::{cosine, Embedder, EmbeddingVector, HashEmbedder};
use super::{Passage, RetrieveContext, Retriever, SourceError, SourceKind};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::path::Path;
use std::sync::Arc;

/// Which side of the local/global split a document was assigned to.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Segment {
    Local,
    Global,
    #[default]
    Unassigned,
}

impl Segment {
    pub fn is_unassigned(&self) -> bool {
        *self == Segment::Unassigned
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusDocument {
    pub id: String,
    #[serde(default)]
    pub title: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Segment::is_unassigned")]
    pub segment: Segment,
}

/// Parses a JSON Lines corpus. Errors name the 1-based line.
pub fn read_corpus(text: &str, origin: &str) -> Result<Vec<CorpusDocument>, SourceError> {
    let mut docs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let doc: CorpusDocument = serde_json::from_str(line).map_err(|e| SourceError::Ingestion {
            path: origin.to_string(),
            message: format!("line {}: {e}", i + 1),
        })?;
        if doc.text.trim().is_empty() {
            return Err(SourceError::Ingestion {
                path: origin.to_string(),
                message: format!("line {}: document {:?} has empty text", i + 1, doc.id),
            });
        }
        docs.push(doc);
    }
    Ok(docs)
}

pub fn load_corpus(path: &Path) -> Result<Vec<CorpusDocument>, SourceError> {
    let text = std::fs::read_to_string(path).map_err(|e| SourceError::Ingestion {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    read_corpus(&text, &path.display().to_string())
}

pub fn write_corpus(path: &Path, docs: &[CorpusDocument]) -> std::io::Result<()> {
    let mut out = String::new();
    for d in docs {
        out.push_str(&serde_json::to_string(d).expect("document serializes"));
        out.push('\n');
    }
    std::fs::write(path, out)
}

/// A flat text corpus with precomputed embeddings, searched exhaustively.
pub struct VectorCorpus {
    docs: Vec<CorpusDocument>,
    embeddings: Vec<EmbeddingVector>,
    embedder: Arc<dyn Embedder>,
}

impl VectorCorpus {
    pub fn new(docs: Vec<CorpusDocument>, embedder: Arc<dyn Embedder>) -> Result<Self, SourceError> {
        let mut seen = HashSet::new();
        for d in &docs {
            if !seen.insert(d.id.as_str()) {
                return Err(SourceError::DuplicateDocument(d.id.clone()));
            }
        }
        let embeddings = docs.iter().map(|d| embedder.embed(&d.text)).collect();
        Ok(Self {
            docs,
            embeddings,
            embedder,
        })
    }

    pub fn with_hash_embedder(docs: Vec<CorpusDocument>, dimension: usize) -> Result<Self, SourceError> {
        Self::new(docs, Arc::new(HashEmbedder::new(dimension)))
    }

    pub fn documents(&self) -> &[CorpusDocument] {
        &self.docs
    }

    pub fn embeddings(&self) -> &[EmbeddingVector] {
        &self.embeddings
    }

    pub fn embedder(&self) -> &Arc<dyn Embedder> {
        &self.embedder
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    /// Concatenates parts in order, re-embedding with the first part's embedder.
    pub fn union(parts: &[&VectorCorpus]) -> Result<Self, SourceError> {
        let first = parts.first().ok_or(SourceError::NoSources)?;
        let docs = parts.iter().flat_map(|p| p.docs.iter().cloned()).collect();
        Self::new(docs, first.embedder.clone())
    }

    /// Top-`k` by cosine similarity, ties broken by ascending document id.
    pub fn search(&self, query: &str, k: usize) -> Result<Vec<Passage>, SourceError> {
        if self.docs.is_empty() {
            return Err(SourceError::EmptyCorpus);
        }
        if k == 0 {
            return Err(SourceError::ZeroDepth);
        }
        let q = self.embedder.embed(query);
        let mut scored: Vec<(f64, usize)> = self
            .embeddings
            .iter()
            .enumerate()
            .map(|(i, e)| (cosine(&q, e), i))
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| self.docs[a.1].id.cmp(&self.docs[b.1].id)));
        Ok(scored
            .into_iter()
            .take(k)
            .map(|(score, i)| {
                let d = &self.docs[i];
                Passage {
                    id: d.id.clone(),
                    title: d.title.clone(),
                    text: d.text.clone(),
                    score,
                }
            })
            .collect())
    }
}

impl Retriever for VectorCorpus {
    fn kind(&self) -> SourceKind {
        SourceKind::VectorCorpus
    }

    fn retrieve(&self, query: &str, top_k: usize, _ctx: &mut RetrieveContext<'_>) -> Result<Vec<Passage>, SourceError> {
        self.search(query, top_k)
    }

    fn as_vector_corpus(&self) -> Option<&VectorCorpus> {
        Some(self)
    }
}

/// Free-function form of [`VectorCorpus::search`].
pub fn vector_retrieve(corpus: &VectorCorpus, query: &str, k: usize) -> Result<Vec<Passage>, SourceError> {
    corpus.search(query, k)
}

#[cfg(test)]
mod tests {
    use super::super::testing::doc;
    use super::*;

    fn toy() -> VectorCorpus {
        VectorCorpus::with_hash_embedder(
            vec![
                doc("c", "Montebello is located in New York."),
                doc("a", "Erik Hort was born in Montebello."),
                doc("b", "New York is one of the 50 US states."),
            ],
            256,
        )
        .unwrap()
    }

    #[test]
    fn identical_text_ranks_first_with_unit_score() {
        let hits = toy().search("Erik Hort was born in Montebello.", 3).unwrap();
        assert_eq!(hits[0].id, "a");
        assert!((hits[0].score - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ranking_matches_brute_force() {
        let corpus = toy();
        let query = "Which state is Montebello in?";
        // independent scan: score everything, then order by (score desc, id asc)
        let e = HashEmbedder::default();
        let q = e.embed(query);
        let mut expected: Vec<(String, f64)> = corpus
            .documents()
            .iter()
            .map(|d| {
                let v = e.embed(&d.text);
                let dot: f64 = q.components.iter().zip(&v.components).map(|(x, y)| x * y).sum();
                (d.id.clone(), dot)
            })
            .collect();
        expected.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        let got: Vec<String> = corpus.search(query, 3).unwrap().into_iter().map(|p| p.id).collect();
        assert_eq!(got, expected.into_iter().map(|x| x.0).collect::<Vec<_>>());
    }

    #[test]
    fn k_beyond_size_returns_everything() {
        assert_eq!(toy().search("anything", 50).unwrap().len(), 3);
    }

    #[test]
    fn ties_break_by_id() {
        let c = VectorCorpus::with_hash_embedder(vec![doc("z", "same words"), doc("m", "same words"), doc("a", "other")], 64)
            .unwrap();
        let ids: Vec<String> = c.search("same words", 3).unwrap().into_iter().map(|p| p.id).collect();
        assert_eq!(ids[..2], ["m".to_string(), "z".to_string()]);
    }

    #[test]
    fn empty_corpus_and_zero_k() {
        let empty = VectorCorpus::with_hash_embedder(vec![], 16).unwrap();
        assert_eq!(empty.search("q", 1).unwrap_err(), SourceError::EmptyCorpus);
        assert_eq!(toy().search("q", 0).unwrap_err(), SourceError::ZeroDepth);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let err = VectorCorpus::with_hash_embedder(vec![doc("a", "x"), doc("a", "y")], 16).err().unwrap();
        assert_eq!(err, SourceError::DuplicateDocument("a".into()));
    }

    #[test]
    fn corpus_file_round_trip_and_errors() {
        let text = "{\"id\":\"1\",\"title\":\"T\",\"text\":\"hello\"}\n\n{\"id\":\"2\",\"text\":\"world\",\"segment\":\"local\"}\n";
        let docs = read_corpus(text, "mem").unwrap();
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[0].segment, Segment::Unassigned);
        assert_eq!(docs[1].segment, Segment::Local);
        let err = read_corpus("{\"id\":\"1\",\"text\":\"a\"}\nnot json\n", "mem").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert!(read_corpus("{\"id\":\"1\",\"text\":\"  \"}", "mem").is_err());

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        write_corpus(&path, &docs).unwrap();
        assert_eq!(load_corpus(&path).unwrap(), docs);
    }
}
