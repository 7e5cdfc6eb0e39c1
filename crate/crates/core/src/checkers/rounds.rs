use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use crate::trace::{EventKind, FaultKind, OpKind, Phase, TraceEvent};
use crate::types::{Plane, ReplicaId, Time};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum CallClass {
    /// Only the accept round.
    Common,
    /// First call after gaining permissions, or any call that ran catch-up,
    /// follower updates or prepare.
    Recovery,
    /// Waited for log space and ran a recycling round.
    Recycling,
}

/// Replication-plane traffic of one propose call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProposeRounds {
    pub replica: ReplicaId,
    pub call: u64,
    pub begin: Time,
    pub end: Time,
    /// Decided index; `None` when the call aborted.
    pub index: Option<u64>,
    pub writes: usize,
    pub reads: usize,
    pub phases: BTreeSet<Phase>,
    pub class: CallClass,
}

struct Open {
    call: u64,
    begin: Time,
    writes: usize,
    reads: usize,
    phases: BTreeSet<Phase>,
    fresh: bool,
}

/// Counts replication-plane posts issued inside each propose span.
pub fn measure_round_complexity(trace: &[TraceEvent]) -> Vec<ProposeRounds> {
    let mut open: BTreeMap<ReplicaId, Open> = BTreeMap::new();
    let mut fresh: BTreeSet<ReplicaId> = BTreeSet::new();
    let mut out = Vec::new();
    let close = |r: ReplicaId, o: Open, end: Time, index: Option<u64>| {
        let class = if o.phases.contains(&Phase::Recycle) {
            CallClass::Recycling
        } else if o.fresh || o.phases.iter().any(|p| *p != Phase::Accept) {
            CallClass::Recovery
        } else {
            CallClass::Common
        };
        ProposeRounds {
            replica: r,
            call: o.call,
            begin: o.begin,
            end,
            index,
            writes: o.writes,
            reads: o.reads,
            phases: o.phases,
            class,
        }
    };
    for e in trace {
        let Some(r) = e.replica else { continue };
        match &e.kind {
            EventKind::Phase {
                phase: Phase::Permission,
            } => {
                fresh.insert(r);
                if let Some(o) = open.remove(&r) {
                    out.push(close(r, o, e.time, None));
                }
            }
            EventKind::Phase { phase } => {
                if let Some(o) = open.get_mut(&r) {
                    o.phases.insert(*phase);
                }
            }
            EventKind::ProposeBegin { call } => {
                let o = Open {
                    call: *call,
                    begin: e.time,
                    writes: 0,
                    reads: 0,
                    phases: BTreeSet::new(),
                    fresh: fresh.remove(&r),
                };
                if let Some(prev) = open.insert(r, o) {
                    out.push(close(r, prev, e.time, None));
                }
            }
            EventKind::Post {
                plane: Plane::Replication,
                op,
                ..
            } => {
                if let Some(o) = open.get_mut(&r) {
                    match op {
                        OpKind::Write => o.writes += 1,
                        OpKind::Read => o.reads += 1,
                    }
                }
            }
            EventKind::ProposeEnd { index, .. } => {
                if let Some(o) = open.remove(&r) {
                    out.push(close(r, o, e.time, Some(*index)));
                }
            }
            EventKind::Abort { .. }
            | EventKind::Fault {
                fault: FaultKind::Crash,
            } => {
                if let Some(o) = open.remove(&r) {
                    out.push(close(r, o, e.time, None));
                }
            }
            _ => {}
        }
    }
    out
}

/// One leader crash and the takeover that followed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Failover {
    pub old: ReplicaId,
    pub crash: Time,
    /// Replica that announced itself leader first after the crash, and when.
    pub new: Option<(ReplicaId, Time)>,
    /// The new leader holds its permissions and starts proposing.
    pub acquired: Option<Time>,
    /// First propose call the new leader completed.
    pub commit: Option<Time>,
}

impl Failover {
    pub fn detection(&self) -> Option<Time> {
        self.new.map(|(_, t)| t - self.crash)
    }

    /// From the new leader's announcement to holding its permissions.
    pub fn switch(&self) -> Option<Time> {
        Some(self.acquired? - self.new?.1)
    }

    pub fn total(&self) -> Option<Time> {
        Some(self.commit? - self.crash)
    }
}

/// Crashes of a replica that believed itself leader, with detection and
/// first-commit times of its successor. Replica 0 starts as leader.
pub fn failovers(trace: &[TraceEvent]) -> Vec<Failover> {
    let mut believes: BTreeMap<ReplicaId, bool> = BTreeMap::new();
    let mut out: Vec<Failover> = Vec::new();
    for e in trace {
        let Some(r) = e.replica else { continue };
        match &e.kind {
            EventKind::Role { leader } => {
                believes.insert(r, *leader == r);
                if *leader == r {
                    for f in out.iter_mut().filter(|f| f.new.is_none() && f.old != r) {
                        f.new = Some((r, e.time));
                    }
                }
            }
            EventKind::Fault {
                fault: FaultKind::Crash,
            } => {
                if believes.get(&r).copied().unwrap_or(r == ReplicaId(0)) {
                    out.push(Failover {
                        old: r,
                        crash: e.time,
                        new: None,
                        acquired: None,
                        commit: None,
                    });
                }
                believes.insert(r, false);
            }
            EventKind::ProposeBegin { .. } => {
                for f in out
                    .iter_mut()
                    .filter(|f| f.acquired.is_none() && f.new.is_some_and(|(n, _)| n == r))
                {
                    f.acquired = Some(e.time);
                }
            }
            EventKind::ProposeEnd { .. } => {
                for f in out
                    .iter_mut()
                    .filter(|f| f.commit.is_none() && f.new.is_some_and(|(n, _)| n == r))
                {
                    f.commit = Some(e.time);
                }
            }
            _ => {}
        }
    }
    out
}
