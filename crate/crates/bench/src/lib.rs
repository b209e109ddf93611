//! Criterion benchmarks for the `wentzell` kernels; see `benches/`.
