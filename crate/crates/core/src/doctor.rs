//! Doctored traces: each one must make a specific checker fail.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use crate::checkers;
use crate::harness::{run_scenario, OpSpec, Scenario};
use crate::kv::{self, Command};
use crate::trace::{EventKind, FaultKind, OpKind, Status, TraceEvent};
use crate::types::ReplicaId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Fixture {
    /// Two replicas commit different values at index 3.
    SplitCommit,
    /// The leader commits after bumping its FUO, then crashes before any
    /// follower write landed.
    CommitWithoutQuorum,
    /// A follower misses the write for index 3 but receives index 4.
    FollowerHole,
    /// A log is granted to a second replica while still held.
    DoubleGrant,
    /// A read returns a value that had already been overwritten.
    StaleRead,
}

pub const ALL: [Fixture; 5] = [
    Fixture::SplitCommit,
    Fixture::CommitWithoutQuorum,
    Fixture::FollowerHole,
    Fixture::DoubleGrant,
    Fixture::StaleRead,
];

impl Fixture {
    pub const fn as_str(self) -> &'static str {
        match self {
            Fixture::SplitCommit => "split-commit",
            Fixture::CommitWithoutQuorum => "commit-without-quorum",
            Fixture::FollowerHole => "follower-hole",
            Fixture::DoubleGrant => "double-grant",
            Fixture::StaleRead => "stale-read",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        ALL.into_iter().find(|f| f.as_str() == s)
    }

    /// Checker this fixture is built to trip.
    pub const fn target(self) -> &'static str {
        match self {
            Fixture::SplitCommit => checkers::AGREEMENT_VALIDITY,
            Fixture::CommitWithoutQuorum => checkers::DECIDED_COMMITTED,
            Fixture::FollowerHole => checkers::NO_HOLES,
            Fixture::DoubleGrant => checkers::EXCLUSIVITY_SOLO,
            Fixture::StaleRead => checkers::LINEARIZABILITY,
        }
    }
}

fn put(k: &str, v: &str) -> Command {
    Command::Put {
        key: k.into(),
        value: v.into(),
    }
}

fn get(k: &str) -> Command {
    Command::Get { key: k.into() }
}

/// Fault-free, strictly sequential run the fixtures are cut from. Op 4 is
/// a read of `a` issued after `a` changed from "1" to "2".
pub fn base_scenario() -> Scenario {
    let cmds = [
        put("a", "1"),
        put("b", "1"),
        get("a"),
        put("a", "2"),
        get("a"),
        put("b", "2"),
        get("b"),
        put("a", "3"),
        put("c", "1"),
        put("c", "2"),
    ];
    let ops = cmds
        .into_iter()
        .enumerate()
        .map(|(i, cmd)| OpSpec {
            time: 200 + 40 * i as u64,
            cmd,
        })
        .collect();
    Scenario {
        horizon: 1_000,
        ops,
        ..Scenario::default()
    }
}

pub fn base_trace() -> Vec<TraceEvent> {
    run_scenario(&base_scenario())
        .expect("base scenario is valid")
        .trace
}

/// Requests carrying a slot write for `index` to a replica other than the
/// issuer.
fn remote_slot_writes(trace: &[TraceEvent], index: u64) -> BTreeSet<u64> {
    trace
        .iter()
        .filter_map(|e| match &e.kind {
            EventKind::SlotWrite {
                req,
                target,
                index: i,
                ..
            } if *i == index && e.replica != Some(*target) => Some(*req),
            _ => None,
        })
        .collect()
}

fn lands(e: &TraceEvent, reqs: &BTreeSet<u64>) -> bool {
    match &e.kind {
        EventKind::Apply {
            req,
            op: OpKind::Write,
            status: Status::Ok,
            ..
        }
        | EventKind::Chunk { req, .. } => reqs.contains(req),
        _ => false,
    }
}

/// Applies `fixture` to a trace; `None` when the trace lacks the events the
/// fixture rewrites.
pub fn doctor(trace: &[TraceEvent], fixture: Fixture) -> Option<Vec<TraceEvent>> {
    let mut out = trace.to_vec();
    match fixture {
        Fixture::SplitCommit => {
            let other = trace.iter().find_map(|e| match &e.kind {
                EventKind::Commit { index: 4, value } => Some(value.clone()),
                _ => None,
            })?;
            let pos = out
                .iter()
                .rposition(|e| matches!(e.kind, EventKind::Commit { index: 3, .. }))?;
            out[pos].kind = EventKind::Commit {
                index: 3,
                value: other,
            };
        }
        Fixture::CommitWithoutQuorum => {
            let pos = trace.iter().position(|e| {
                matches!(e.kind, EventKind::Commit { index: 5, .. })
                    && e.replica == Some(ReplicaId(0))
            })?;
            let reqs = remote_slot_writes(trace, 5);
            out.truncate(pos + 1);
            out.retain(|e| !lands(e, &reqs));
            let time = trace[pos].time;
            out.push(TraceEvent::new(
                time,
                ReplicaId(0),
                EventKind::Fault {
                    fault: FaultKind::Crash,
                },
            ));
        }
        Fixture::FollowerHole => {
            let reqs: BTreeSet<u64> = trace
                .iter()
                .filter_map(|e| match &e.kind {
                    EventKind::SlotWrite {
                        req,
                        target: ReplicaId(2),
                        index: 3,
                        ..
                    } => Some(*req),
                    _ => None,
                })
                .collect();
            if reqs.is_empty() {
                return None;
            }
            // The follower never gets past the gap either.
            out.retain(|e| {
                !lands(e, &reqs)
                    && !(e.replica == Some(ReplicaId(2))
                        && matches!(e.kind, EventKind::Execute { index } if index >= 3))
            });
        }
        Fixture::DoubleGrant => {
            let pos = trace.iter().position(|e| {
                matches!(e.kind, EventKind::Grant { .. }) && e.replica == Some(ReplicaId(2))
            })?;
            let mut extra = trace[pos].clone();
            extra.kind = EventKind::Grant {
                requester: ReplicaId(1),
            };
            out.insert(pos + 1, extra);
        }
        Fixture::StaleRead => {
            let pos = trace
                .iter()
                .position(|e| matches!(e.kind, EventKind::Respond { op: 4, .. }))?;
            out[pos].kind = EventKind::Respond {
                op: 4,
                result: kv::response(Some(b"1")),
            };
        }
    }
    Some(out)
}

/// Every fixture cut from the base run.
pub fn fixtures() -> Vec<(Fixture, Vec<TraceEvent>)> {
    let base = base_trace();
    let mut out = vec![];
    for f in ALL {
        out.push((
            f,
            doctor(&base, f).expect("base run has the rewritten events"),
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::checkers::run_all;

    #[test]
    fn base_trace_passes_everything() {
        for v in run_all(&base_trace(), true) {
            assert!(v.pass, "{v:?}");
        }
    }

    #[test]
    fn each_fixture_fails_its_checker() {
        for (f, trace) in fixtures() {
            let verdicts = run_all(&trace, true);
            let v = verdicts.iter().find(|v| v.name == f.target()).unwrap();
            assert!(!v.pass, "{} passed {}", f.as_str(), v.name);
            assert!(v.witness.is_some());
        }
    }

    #[test]
    fn split_commit_witness_names_index_three() {
        let trace = doctor(&base_trace(), Fixture::SplitCommit).unwrap();
        let v = checkers::check_agreement_validity(&trace);
        assert!(v.witness.unwrap().detail.starts_with("index 3:"));
    }

    #[test]
    fn names_roundtrip() {
        for f in ALL {
            assert_eq!(Fixture::parse(f.as_str()), Some(f));
        }
    }
}
