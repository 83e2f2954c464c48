//! Criterion benchmarks for the transpose convolution variants live in `benches/`.
