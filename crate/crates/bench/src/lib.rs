//! Criterion benchmarks for the horlab kernels live under `benches/`.
