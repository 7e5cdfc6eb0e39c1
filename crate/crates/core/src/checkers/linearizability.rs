use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::safety::hex;
use super::{Verdict, Witness, LINEARIZABILITY};
use crate::error::{Error, Result};
use crate::kv::{self, Command};
use crate::trace::{EventKind, TraceEvent};
use crate::types::Time;

/// Largest number of simultaneously open operations on one key the search
/// accepts.
pub const DEFAULT_WINDOW: usize = 12;

/// One client operation. Positions are trace indices and define real-time
/// order; `response` is `None` for operations still open at the end.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HistoryOp {
    pub op: u64,
    pub cmd: Command,
    pub invoke: (Time, usize),
    pub response: Option<(Time, usize, Vec<u8>)>,
}

/// Extracts the client history. Malformed payloads and repeated responses
/// are dropped.
pub fn history(trace: &[TraceEvent]) -> Vec<HistoryOp> {
    let mut ops: BTreeMap<u64, HistoryOp> = BTreeMap::new();
    for (pos, e) in trace.iter().enumerate() {
        match &e.kind {
            EventKind::Invoke { op, payload } => {
                if let Some((_, cmd)) = kv::decode(payload) {
                    ops.entry(*op).or_insert(HistoryOp {
                        op: *op,
                        cmd,
                        invoke: (e.time, pos),
                        response: None,
                    });
                }
            }
            EventKind::Respond { op, result } => {
                if let Some(h) = ops.get_mut(op) {
                    h.response.get_or_insert((e.time, pos, result.clone()));
                }
            }
            _ => {}
        }
    }
    let mut out: Vec<_> = ops.into_values().collect();
    out.sort_by_key(|h| h.invoke.1);
    out
}

type State = Option<Vec<u8>>;

struct Search<'a> {
    ops: Vec<&'a HistoryOp>,
    dead: BTreeSet<(Vec<u64>, State)>,
    /// Largest linearized prefix reached, for the witness.
    best: (usize, Vec<u64>),
}

fn is_set(bits: &[u64], i: usize) -> bool {
    bits[i / 64] >> (i % 64) & 1 == 1
}

fn flip(bits: &mut [u64], i: usize) {
    bits[i / 64] ^= 1 << (i % 64);
}

impl Search<'_> {
    /// Applies `op` to `state`; `None` if its recorded response disagrees.
    fn step(op: &HistoryOp, state: &State) -> Option<State> {
        let (expected, next) = match &op.cmd {
            Command::Put { value, .. } => (kv::response(state.as_deref()), Some(value.clone())),
            Command::Get { .. } => (kv::response(state.as_deref()), state.clone()),
        };
        match &op.response {
            Some((_, _, got)) if *got != expected => None,
            _ => Some(next),
        }
    }

    fn done(&self, bits: &[u64]) -> bool {
        self.ops
            .iter()
            .enumerate()
            .all(|(i, op)| op.response.is_none() || is_set(bits, i))
    }

    fn run(&mut self, bits: &mut Vec<u64>, state: State, depth: usize) -> bool {
        if self.done(bits) {
            return true;
        }
        if self.dead.contains(&(bits.clone(), state.clone())) {
            return false;
        }
        if depth > self.best.0 {
            self.best = (depth, bits.clone());
        }
        // An operation may go next only if it was invoked before every
        // pending response.
        let horizon = (0..self.ops.len())
            .filter(|&i| !is_set(bits, i))
            .filter_map(|i| self.ops[i].response.as_ref().map(|r| r.1))
            .min()
            .unwrap_or(usize::MAX);
        for i in 0..self.ops.len() {
            if is_set(bits, i) {
                continue;
            }
            if self.ops[i].invoke.1 > horizon {
                break;
            }
            let Some(next) = Self::step(self.ops[i], &state) else {
                continue;
            };
            flip(bits, i);
            let ok = self.run(bits, next, depth + 1);
            flip(bits, i);
            if ok {
                return true;
            }
        }
        self.dead.insert((bits.clone(), state));
        false
    }
}

fn max_open(ops: &[&HistoryOp]) -> usize {
    let mut edges: Vec<(usize, i32)> = Vec::new();
    for op in ops {
        edges.push((op.invoke.1, 1));
        if let Some(r) = &op.response {
            edges.push((r.1, -1));
        }
    }
    edges.sort();
    let (mut open, mut most) = (0i32, 0i32);
    for (_, d) in edges {
        open += d;
        most = most.max(open);
    }
    most as usize
}

/// Searches, key by key, for a sequential order of the KV operations that
/// respects real-time precedence and every recorded response. Open reads
/// are dropped; open writes may or may not have taken effect.
///
/// Refuses with [`Error::WindowTooLarge`] when more than `window`
/// operations on one key are open at once.
pub fn check_linearizability(history: &[HistoryOp], window: usize) -> Result<Verdict> {
    let mut by_key: BTreeMap<&[u8], Vec<&HistoryOp>> = BTreeMap::new();
    for h in history {
        if h.response.is_none() && matches!(h.cmd, Command::Get { .. }) {
            continue;
        }
        by_key.entry(h.cmd.key()).or_default().push(h);
    }
    for ops in by_key.values() {
        let open = max_open(ops);
        if open > window {
            return Err(Error::WindowTooLarge {
                got: open,
                cap: window,
            });
        }
    }
    for (key, ops) in by_key {
        let words = ops.len().div_ceil(64);
        let mut search = Search {
            ops,
            dead: BTreeSet::new(),
            best: (0, vec![0; words]),
        };
        if search.run(&mut vec![0; words], None, 0) {
            continue;
        }
        // Witness: the earliest-responding operation left over at the
        // deepest point the search reached.
        let bits = search.best.1.clone();
        let stuck = (0..search.ops.len())
            .filter(|&i| !is_set(&bits, i))
            .filter_map(|i| search.ops[i].response.as_ref().map(|r| (r.1, i)))
            .min()
            .map(|(_, i)| search.ops[i])
            .expect("an unfinished op exists");
        let (time, position, result) = stuck.response.clone().expect("completed");
        let detail = format!(
            "key {}: op {} returned {} with no legal order",
            hex(key),
            stuck.op,
            hex(&result)
        );
        return Ok(Verdict {
            name: LINEARIZABILITY,
            pass: false,
            witness: Some(Witness {
                time,
                position,
                detail,
            }),
        });
    }
    Ok(Verdict::pass(LINEARIZABILITY))
}
