//! Benchmarks for the hybrid systems toolkit live in `benches/`.
