//! Criterion benchmarks for ssn-core live in `benches/`.
