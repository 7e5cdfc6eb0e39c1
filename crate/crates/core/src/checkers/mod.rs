//! Executable checks over traces.
//!
//! Every checker is a pure function of the trace: state is rebuilt from the
//! recorded fabric operations rather than read from live replicas.

use alloc::string::String;
use alloc::vec::Vec;

use crate::trace::TraceEvent;
use crate::types::Time;

mod linearizability;
mod mirror;
mod rounds;
mod safety;

pub use linearizability::{check_linearizability, history, HistoryOp, DEFAULT_WINDOW};
pub use mirror::{Mirror, SlotState};
pub use rounds::{failovers, measure_round_complexity, CallClass, Failover, ProposeRounds};
pub use safety::{
    check_agreement_validity, check_decided_committed, check_exclusivity_solo, check_no_holes,
};

pub const AGREEMENT_VALIDITY: &str = "check_agreement_validity";
pub const DECIDED_COMMITTED: &str = "check_decided_committed";
pub const NO_HOLES: &str = "check_no_holes";
pub const EXCLUSIVITY_SOLO: &str = "check_exclusivity_solo";
pub const LINEARIZABILITY: &str = "check_linearizability";

/// First violating event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Witness {
    pub time: Time,
    /// Position of the event in the trace.
    pub position: usize,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    pub name: &'static str,
    pub pass: bool,
    pub witness: Option<Witness>,
}

impl Verdict {
    pub fn pass(name: &'static str) -> Self {
        Verdict {
            name,
            pass: true,
            witness: None,
        }
    }

    pub fn fail(name: &'static str, trace: &[TraceEvent], position: usize, detail: String) -> Self {
        let time = trace.get(position).map_or(0, |e| e.time);
        Verdict {
            name,
            pass: false,
            witness: Some(Witness {
                time,
                position,
                detail,
            }),
        }
    }
}

/// Runs the full suite. `no_holes` is only meaningful when followers are
/// updated on takeover, so callers may leave it out.
pub fn run_all(trace: &[TraceEvent], no_holes: bool) -> Vec<Verdict> {
    let mut out = alloc::vec![
        check_agreement_validity(trace),
        check_decided_committed(trace),
        check_exclusivity_solo(trace),
    ];
    if no_holes {
        out.push(check_no_holes(trace));
    }
    out.push(
        check_linearizability(&history(trace), DEFAULT_WINDOW).unwrap_or_else(|err| Verdict {
            name: LINEARIZABILITY,
            pass: false,
            witness: Some(Witness {
                time: 0,
                position: 0,
                detail: alloc::format!("refused: {err}"),
            }),
        }),
    );
    out
}
