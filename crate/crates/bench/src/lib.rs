//! Benchmarks for `multiglitch-core`; see `benches/core.rs`.
