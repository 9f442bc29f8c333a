//! Criterion benchmarks for the `qhd` solvers live in `benches/`.
