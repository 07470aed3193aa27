//! Criterion benchmarks for the executor and applier live in `benches/`.
