//! Criterion benchmarks for the `mrx` planning hot paths. See `benches/`.
