//! Client-side tuning of the two parallel-file-system I/O-path parameters
//! (`max_pages_per_rpc`, `max_rpcs_in_flight`) together with a deterministic
//! fixed-timestep simulator of the client-to-server transfer path.
//!
//! The crate is split along the data flow:
//!
//! * [`tuner`]: the pure decision engine, one tuning turn in, one decision out.
//! * [`metrics`]: the client-statistics snapshot format and window derivation,
//!   the only input the tuner ever sees.
//! * [`workload`]: request stream generators (random/sequential, read/write,
//!   whole-file cycles) and phase schedules.
//! * [`sim`]: N clients sharing one storage server, with dirty page cache, RPC
//!   formation, bounded in-flight window and FIFO service with per-RPC overhead.
//! * [`scenario`]: the TOML experiment description consumed by the harness.
//! * [`sweep`]: exhaustive static evaluation of the power-of-two parameter
//!   grid, the brute-force reference for what tuning should reach.
//!
//! Everything is deterministic: a scenario plus a seed fully pins every byte
//! of output, regardless of how many threads a sweep fans out to.

pub mod metrics;
pub mod scenario;
pub mod sim;
pub mod sweep;
pub mod tuner;
pub mod workload;

/// Page size assumed for `max_pages_per_rpc` accounting (bytes).
pub const PAGE_SIZE: u64 = 4096;
