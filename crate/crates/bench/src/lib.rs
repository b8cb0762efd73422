//! Criterion benchmarks for the simulator live under `benches/`; run them with `cargo bench -p byzpp-bench`.
