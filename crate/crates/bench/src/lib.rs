//! Criterion benchmarks for the chargelot solvers and simulators; see `benches/`.
