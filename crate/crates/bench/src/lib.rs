//! Criterion benchmarks for contactkit; see `benches/bench_main.rs`.
//!
//! Run with `cargo bench -p contactkit-bench`.
