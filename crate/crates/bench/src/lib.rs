//! Criterion benchmarks for the solver, simulator and estimators live in
//! `benches/`; run them with `cargo bench -p netform-bench`.
