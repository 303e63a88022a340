//! Deterministic feature-hashing embedder.

use serde::{Deserialize, Serialize};

pub const DEFAULT_DIMENSION: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub components: Vec<f64>,
    /// L2 norm of `components`: 1 for hashed text, 0 for text without tokens.
    pub norm: f64,
}

impl EmbeddingVector {
    pub fn zeros(dimension: usize) -> Self {
        Self {
            components: vec![0.0; dimension],
            norm: 0.0,
        }
    }
}

pub trait Embedder: Send + Sync {
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> EmbeddingVector;
}

/// Lowercased alphanumeric runs.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

// FNV-1a, 64-bit
fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Signed bag-of-words hashing: bucket `h mod d`, sign from bit 63, L2-normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashEmbedder {
    dimension: usize,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_DIMENSION)
    }
}

impl HashEmbedder {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        Self { dimension }
    }
}

impl Embedder for HashEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> EmbeddingVector {
        let mut v = EmbeddingVector::zeros(self.dimension);
        for token in tokenize(text) {
            let h = fnv1a64(token.as_bytes());
            let bucket = (h % self.dimension as u64) as usize;
            let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
            v.components[bucket] += sign;
        }
        let norm = v.components.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.components.iter_mut().for_each(|x| *x /= norm);
            v.norm = v.components.iter().map(|x| x * x).sum::<f64>().sqrt();
        }
        v
    }
}

/// Cosine similarity; 0 when either side is the zero vector.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> f64 {
    if a.norm == 0.0 || b.norm == 0.0 {
        return 0.0;
    }
    let dot: f64 = a.components.iter().zip(&b.components).map(|(x, y)| x * y).sum();
    dot / (a.norm * b.norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fnv_reference_vectors() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn empty_text_is_zero_vector() {
        let v = HashEmbedder::default().embed("");
        assert_eq!(v.components.len(), 256);
        assert!(v.components.iter().all(|x| *x == 0.0));
        assert_eq!(v.norm, 0.0);
        assert_eq!(HashEmbedder::default().embed("?! --").norm, 0.0);
    }

    #[test]
    fn word_order_does_not_matter() {
        let e = HashEmbedder::default();
        let a = e.embed("montebello new york");
        let b = e.embed("new york montebello");
        assert_eq!(a, b);
        assert!((cosine(&a, &b) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tokenizer_lowercases_and_splits() {
        assert_eq!(tokenize("Erik Hort's birth-place, 1867!"), vec!["erik", "hort", "s", "birth", "place", "1867"]);
    }

    proptest! {
        #[test]
        fn deterministic_and_unit_norm(text in ".{0,80}") {
            let e = HashEmbedder::default();
            let a = e.embed(&text);
            prop_assert_eq!(&a, &e.embed(&text));
            let n = a.components.iter().map(|x| x * x).sum::<f64>().sqrt();
            if tokenize(&text).is_empty() {
                prop_assert_eq!(n, 0.0);
            } else {
                prop_assert!((n - 1.0).abs() <= 1e-9);
            }
        }
    }
}
