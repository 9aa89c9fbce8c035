//! Criterion benchmarks for the engine live in `benches/engine.rs`:
//! training steps per variant, cross attention and the AUPRC metrics.
