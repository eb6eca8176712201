//! Criterion benchmarks for the `stochrec` hot paths; see `benches/`.
