//! Library surface of the `hybridir` CLI: benchmark orchestration and the
//! throughput benchmark, kept callable so integration tests can drive the
//! same code paths as the binary.

pub mod bench;
