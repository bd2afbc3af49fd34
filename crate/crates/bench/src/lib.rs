//! Criterion benchmarks for the hot paths of `smalldev-core`; see `benches/kernels.rs`.
