use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;

use super::mirror::Mirror;
use super::{Verdict, AGREEMENT_VALIDITY, DECIDED_COMMITTED, EXCLUSIVITY_SOLO, NO_HOLES};
use crate::trace::{EventKind, OpKind, Status, TraceEvent};
use crate::types::{majority, RegionKind, ReplicaId};

pub(crate) fn hex(bytes: &[u8]) -> String {
    use core::fmt::Write;
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        let _ = write!(s, "{b:02x}");
    }
    if s.is_empty() {
        s.push('-');
    }
    s
}

/// Equal values for every commit at the same index, and every committed
/// value was submitted by a client.
pub fn check_agreement_validity(trace: &[TraceEvent]) -> Verdict {
    let mut proposed: BTreeSet<&[u8]> = BTreeSet::new();
    let mut decided: BTreeMap<u64, &[u8]> = BTreeMap::new();
    for (pos, e) in trace.iter().enumerate() {
        match &e.kind {
            EventKind::Invoke { payload, .. } => {
                proposed.insert(payload);
            }
            EventKind::Commit { index, value } => {
                if let Some(prev) = decided.get(index) {
                    if *prev != value.as_slice() {
                        let detail = format!("index {index}: {} vs {}", hex(prev), hex(value));
                        return Verdict::fail(AGREEMENT_VALIDITY, trace, pos, detail);
                    }
                } else {
                    decided.insert(*index, value);
                }
                if !proposed.contains(value.as_slice()) {
                    let detail = format!("index {index}: value {} was never submitted", hex(value));
                    return Verdict::fail(AGREEMENT_VALIDITY, trace, pos, detail);
                }
            }
            _ => {}
        }
    }
    Verdict::pass(AGREEMENT_VALIDITY)
}

fn missing_setup(name: &'static str, trace: &[TraceEvent]) -> Verdict {
    let needs = trace
        .iter()
        .position(|e| matches!(e.kind, EventKind::Post { .. } | EventKind::Commit { .. }));
    match needs {
        Some(pos) => Verdict::fail(name, trace, pos, "trace has no setup record".into()),
        None => Verdict::pass(name),
    }
}

/// At every commit instant the committed value sits at its index in a
/// majority of logs.
pub fn check_decided_committed(trace: &[TraceEvent]) -> Verdict {
    let Some(mut mirror) = Mirror::from_trace(trace) else {
        return missing_setup(DECIDED_COMMITTED, trace);
    };
    let quorum = majority(mirror.n());
    for (pos, e) in trace.iter().enumerate() {
        mirror.observe(e);
        if let EventKind::Commit { index, value } = &e.kind {
            let holders = (0..mirror.n())
                .filter(|&r| {
                    mirror
                        .holds(ReplicaId(r as u8), *index)
                        .is_some_and(|s| s.value == *value)
                })
                .count();
            if holders < quorum {
                let who = e.replica.map_or(String::from("?"), |r| format!("{r}"));
                let detail = format!(
                    "{who} committed index {index} held by {holders} of {} logs",
                    mirror.n()
                );
                return Verdict::fail(DECIDED_COMMITTED, trace, pos, detail);
            }
        }
    }
    Verdict::pass(DECIDED_COMMITTED)
}

/// For present logical indices at or above `min_head`: the first present
/// index whose predecessor (down to `min_head`) is missing, as
/// `(present, missing)`.
pub fn first_hole(present: &BTreeSet<u64>, min_head: u64) -> Option<(u64, u64)> {
    (min_head..)
        .zip(present.range(min_head..))
        .find(|&(expect, &i)| i != expect)
        .map(|(expect, &i)| (i, expect))
}

/// No replica holds an entry above a missing one, counting from the lowest
/// log head of the live replicas.
pub fn check_no_holes(trace: &[TraceEvent]) -> Verdict {
    let Some(mut mirror) = Mirror::from_trace(trace) else {
        return missing_setup(NO_HOLES, trace);
    };
    for (pos, e) in trace.iter().enumerate() {
        let Some(r) = mirror.observe(e) else { continue };
        if mirror.is_crashed(r) {
            continue;
        }
        let present: BTreeSet<u64> = mirror.slots(r).iter().flatten().map(|s| s.index).collect();
        if let Some((at, missing)) = first_hole(&present, mirror.min_head()) {
            let detail = format!("{r} holds index {at} but not {missing}");
            return Verdict::fail(NO_HOLES, trace, pos, detail);
        }
    }
    Verdict::pass(NO_HOLES)
}

/// (a) at most one write-permission holder per log at any instant, and no
/// refused grants; (b) a successful log write by `p` is never preceded,
/// since `p`'s grant, by another replica's successful write to that log.
pub fn check_exclusivity_solo(trace: &[TraceEvent]) -> Verdict {
    let mut holder: BTreeMap<ReplicaId, ReplicaId> = BTreeMap::new();
    let mut writers: BTreeMap<ReplicaId, BTreeSet<ReplicaId>> = BTreeMap::new();
    let mut log_writes: BTreeSet<u64> = BTreeSet::new();
    let fail = |pos, d| Verdict::fail(EXCLUSIVITY_SOLO, trace, pos, d);
    for (pos, e) in trace.iter().enumerate() {
        let (landed_by, landed_at) = match (&e.kind, e.replica) {
            (
                EventKind::Post {
                    req,
                    op: OpKind::Write,
                    region: RegionKind::Log,
                    ..
                },
                _,
            ) => {
                log_writes.insert(*req);
                continue;
            }
            (EventKind::Grant { requester }, Some(q)) => {
                if let Some(old) = holder.insert(q, *requester) {
                    return fail(
                        pos,
                        format!("{q} granted to {requester} while held by {old}"),
                    );
                }
                writers.entry(q).or_default().clear();
                continue;
            }
            (EventKind::Revoke { .. }, Some(q)) => {
                holder.remove(&q);
                continue;
            }
            (EventKind::Violation { detail }, _) => return fail(pos, detail.clone()),
            (EventKind::Chunk { req, target, .. }, Some(p)) if log_writes.contains(req) => {
                (p, *target)
            }
            (
                EventKind::Apply {
                    req,
                    target,
                    status: Status::Ok,
                    op: OpKind::Write,
                    ..
                },
                Some(p),
            ) if log_writes.remove(req) => (p, *target),
            _ => continue,
        };
        if holder.get(&landed_at) != Some(&landed_by) {
            return fail(
                pos,
                format!("{landed_by} wrote to {landed_at} without holding its permission"),
            );
        }
        let set = writers.entry(landed_at).or_default();
        if let Some(other) = set.iter().find(|&&w| w != landed_by) {
            return fail(
                pos,
                format!("{landed_by} wrote to {landed_at} after {other} did under the same grant"),
            );
        }
        set.insert(landed_by);
    }
    Verdict::pass(EXCLUSIVITY_SOLO)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(v: &[u64]) -> BTreeSet<u64> {
        v.iter().copied().collect()
    }

    #[test]
    fn contiguous_prefix_has_no_hole() {
        assert_eq!(first_hole(&set(&[0, 1, 2]), 0), None);
    }

    #[test]
    fn gap_reports_present_and_missing() {
        assert_eq!(first_hole(&set(&[0, 1, 3]), 0), Some((3, 2)));
    }

    #[test]
    fn entries_below_min_head_are_ignored() {
        assert_eq!(first_hole(&set(&[1, 5, 6]), 5), None);
        assert_eq!(first_hole(&set(&[6]), 5), Some((6, 5)));
    }
}
