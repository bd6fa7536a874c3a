//! Criterion benchmarks for `rfib-core`; see `benches/rfib.rs`.
