//! Benchmarks for the usf-core hot paths live in `benches/`.
