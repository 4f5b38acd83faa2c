//! Criterion benchmarks for the capacity pipeline, the packet codec, Ledger
//! ingestion and short simulations. Run with `cargo bench -p v2x-ledger-bench`.
