//! File formats, seed sweeps and the fail-over bench behind the `permsmr`
//! binary.

pub mod error;
pub mod failover;
pub mod report;
pub mod scenario_file;
pub mod sweep;
pub mod trace_text;

pub use error::{CliError, ParseError};
