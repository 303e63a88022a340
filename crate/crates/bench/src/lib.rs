//! Criterion benchmarks for the retrieval and scoring hot paths; see `benches/retrieval.rs`.
