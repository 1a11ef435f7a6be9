//! Criterion benchmarks for the tape, the recurrent cells, the discrepancy
//! metric and one training step. Run with `cargo bench -p stgen-bench`.
