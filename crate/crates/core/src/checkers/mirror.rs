use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::log::{LogLayout, FUO_OFFSET, HEADER_SIZE};
use crate::trace::{EventKind, FaultKind, OpKind, Status, TraceEvent};
use crate::types::{RegionKind, ReplicaId};

/// Contents of one physical slot as seen through the trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotState {
    pub index: u64,
    pub proposal: u64,
    pub value: Vec<u8>,
}

#[derive(Debug, Clone)]
struct PendingWrite {
    target: ReplicaId,
    offset: usize,
    len: usize,
    landed: usize,
    slots: Vec<(u64, u64, Vec<u8>)>,
    fuo: Option<u64>,
}

/// Log regions rebuilt from posts, write annotations, chunks and applies.
///
/// A slot takes its new state when the write's last byte of that slot (the
/// canary) lands, which is when a reader would first see the change.
#[derive(Debug, Clone)]
pub struct Mirror {
    capacity: u64,
    slot_width: usize,
    logs: Vec<Vec<Option<SlotState>>>,
    fuo: Vec<u64>,
    heads: Vec<u64>,
    crashed: Vec<bool>,
    writes: BTreeMap<u64, PendingWrite>,
}

impl Mirror {
    pub fn new(n: usize, layout: LogLayout) -> Self {
        let capacity = layout.capacity();
        Mirror {
            capacity,
            slot_width: layout.slot_width(),
            logs: vec![vec![None; capacity as usize]; n],
            fuo: vec![0; n],
            heads: vec![0; n],
            crashed: vec![false; n],
            writes: BTreeMap::new(),
        }
    }

    /// Builds an empty mirror from the trace's setup record.
    pub fn from_trace(trace: &[TraceEvent]) -> Option<Self> {
        trace.iter().find_map(|e| match e.kind {
            EventKind::Setup {
                n,
                capacity,
                value_size,
            } => LogLayout::new(capacity, value_size as usize)
                .ok()
                .map(|l| Mirror::new(n as usize, l)),
            _ => None,
        })
    }

    pub fn n(&self) -> usize {
        self.logs.len()
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    /// Entry at logical `index` of `r`'s log, if the physical slot holds it.
    pub fn holds(&self, r: ReplicaId, index: u64) -> Option<&SlotState> {
        let slot = self.logs.get(r.index())?[(index % self.capacity) as usize].as_ref()?;
        (slot.index == index).then_some(slot)
    }

    pub fn slots(&self, r: ReplicaId) -> &[Option<SlotState>] {
        &self.logs[r.index()]
    }

    pub fn fuo(&self, r: ReplicaId) -> u64 {
        self.fuo[r.index()]
    }

    pub fn is_crashed(&self, r: ReplicaId) -> bool {
        self.crashed[r.index()]
    }

    /// Lowest executed-prefix length over replicas that have not crashed.
    pub fn min_head(&self) -> u64 {
        (0..self.n())
            .filter(|&r| !self.crashed[r])
            .map(|r| self.heads[r])
            .min()
            .unwrap_or(0)
    }

    /// Applies one event. Returns the replica whose log slots changed.
    pub fn observe(&mut self, e: &TraceEvent) -> Option<ReplicaId> {
        let known = |r: ReplicaId| r.index() < self.logs.len();
        match &e.kind {
            EventKind::Post {
                req,
                op: OpKind::Write,
                target,
                region: RegionKind::Log,
                offset,
                len,
                ..
            } if known(*target) => {
                self.writes.insert(
                    *req,
                    PendingWrite {
                        target: *target,
                        offset: *offset as usize,
                        len: *len as usize,
                        landed: 0,
                        slots: Vec::new(),
                        fuo: None,
                    },
                );
                None
            }
            EventKind::SlotWrite {
                req,
                index,
                proposal,
                value,
                ..
            } => {
                if let Some(w) = self.writes.get_mut(req) {
                    w.slots.push((*index, *proposal, value.clone()));
                }
                None
            }
            EventKind::FuoWrite { req, fuo, .. } => {
                if let Some(w) = self.writes.get_mut(req) {
                    w.fuo = Some(*fuo);
                }
                None
            }
            EventKind::Chunk { req, upto, .. } => self.land(*req, *upto as usize),
            EventKind::Apply {
                req,
                op: OpKind::Write,
                region: RegionKind::Log,
                status,
                ..
            } => {
                let changed = match (*status, self.writes.get(req)) {
                    (Status::Ok, Some(w)) => {
                        let len = w.len;
                        self.land(*req, len)
                    }
                    _ => None,
                };
                self.writes.remove(req);
                changed
            }
            EventKind::LocalFuo { fuo } => {
                if let Some(r) = e.replica.filter(|&r| known(r)) {
                    self.fuo[r.index()] = *fuo;
                }
                None
            }
            EventKind::Execute { index } => {
                if let Some(r) = e.replica.filter(|&r| known(r)) {
                    self.heads[r.index()] = self.heads[r.index()].max(index + 1);
                }
                None
            }
            EventKind::Fault {
                fault: FaultKind::Crash,
            } => {
                if let Some(r) = e.replica.filter(|&r| known(r)) {
                    self.crashed[r.index()] = true;
                }
                None
            }
            _ => None,
        }
    }

    fn land(&mut self, req: u64, upto: usize) -> Option<ReplicaId> {
        let w = self.writes.get_mut(&req)?;
        let (lo, hi) = (w.offset + w.landed, w.offset + upto.min(w.len));
        if hi <= lo {
            return None;
        }
        w.landed = upto.min(w.len);
        let w = w.clone();
        let r = w.target.index();
        if lo < FUO_OFFSET + 8 && hi >= FUO_OFFSET + 8 {
            if let Some(f) = w.fuo {
                self.fuo[r] = f;
            }
        }
        // Slots whose canary byte lies in [lo, hi).
        let width = self.slot_width;
        let first = (lo + 1)
            .saturating_sub(HEADER_SIZE)
            .div_ceil(width)
            .saturating_sub(1);
        let end = (hi.saturating_sub(HEADER_SIZE) / width).min(self.capacity as usize);
        let mut changed = false;
        for p in first..end {
            let entry = w
                .slots
                .iter()
                .find(|(i, ..)| (i % self.capacity) as usize == p)
                .map(|(i, prop, v)| SlotState {
                    index: *i,
                    proposal: *prop,
                    value: v.clone(),
                });
            self.logs[r][p] = entry;
            changed = true;
        }
        changed.then_some(w.target)
    }
}
