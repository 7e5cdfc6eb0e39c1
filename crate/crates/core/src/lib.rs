//! Permission-based state machine replication over a simulated one-sided
//! memory fabric.
//!
//! A leader replicates a value with a single one-sided write to a majority of
//! replicas in the common case. Races between would-be leaders are prevented
//! rather than detected: each replica grants write access to its log to at
//! most one remote holder at a time, so a leader that loses access learns of it
//! through a failed write.
//!
//! The crate is `no_std` (with `alloc`) and contains everything that is pure
//! computation:
//!
//! - [`fabric`]: the deterministic discrete-event memory fabric (queue pairs,
//!   one-sided reads/writes, write permissions, timers).
//! - [`log`]: the byte layout of the consensus log and slot codec.
//! - [`replication`]: the leader's propose path and the follower replayer.
//! - [`background`]: pull-score leader election, the permission worker and
//!   log recycling helpers.
//! - [`harness`]: scenarios, the replica wiring and the run loop.
//! - [`checkers`]: executable safety/liveness checks over traces.
//!
//! File formats, the CLI and anything else that touches the OS live in the
//! `permsmr-cli` crate.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod background;
pub mod checkers;
pub mod doctor;
pub mod error;
pub mod fabric;
pub mod harness;
pub mod kv;
pub mod log;
pub mod replication;
pub mod trace;
pub mod types;
pub mod workload;

pub use error::{Error, Result};
pub use types::{Plane, RegionKind, ReplicaId, Time};
