//! Criterion benchmarks for the hot automaton and Fourier loops; see `benches/`.
