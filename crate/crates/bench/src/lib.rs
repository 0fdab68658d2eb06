//! Criterion benchmarks for akcy-core live in `benches/`.
