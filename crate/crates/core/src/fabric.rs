//! Deterministic discrete-event memory fabric.
//!
//! Replicas expose two regions each (log and background) and reach each
//! other's regions with one-sided reads and writes posted on per-pair,
//! per-plane queue pairs. Every request, delivery, completion, permission
//! change and timer is an event in a single priority queue ordered by
//! `(time, replica, kind, seq)`, so a seed and a sequence of calls fully
//! determine what happens.

use alloc::collections::{BTreeMap, BinaryHeap, VecDeque};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::{Ordering, Reverse};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::log::write_u64;
use crate::trace::{EventKind, OpKind, Status, TraceEvent};
use crate::types::{Plane, RegionKind, ReplicaId, Time};

/// Per-plane latency: `base + U[0, jitter]` ticks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DelayModel {
    pub base: Time,
    pub jitter: Time,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FabricConfig {
    pub seed: u64,
    pub replication: DelayModel,
    pub background: DelayModel,
    /// Latency of a replica's requests to its own regions.
    pub loopback: Time,
    /// Time for a permission change (revoke or grant) to take effect.
    pub perm_latency: Time,
    /// Delay before a request to a crashed replica fails.
    pub conn_timeout: Time,
    pub torn_writes: bool,
    pub chunk: usize,
}

impl Default for FabricConfig {
    fn default() -> Self {
        FabricConfig {
            seed: 0,
            replication: DelayModel { base: 1, jitter: 1 },
            background: DelayModel { base: 1, jitter: 1 },
            loopback: 0,
            perm_latency: 50,
            conn_timeout: 2,
            torn_writes: false,
            chunk: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Liveness {
    Alive,
    Paused,
    Crashed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum PermAction {
    Grant(ReplicaId),
    Revoke,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Operational,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkCompletion {
    pub req: u64,
    pub target: ReplicaId,
    pub plane: Plane,
    pub op: OpKind,
    pub status: Status,
    /// Read payload; empty for writes and failed reads.
    pub data: Vec<u8>,
    pub time: Time,
}

/// What [`Fabric::advance`] did.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FabricEvent {
    /// A request reached its target. For successful writes, all bytes are
    /// now applied.
    Delivered {
        req: u64,
        issuer: ReplicaId,
        target: ReplicaId,
        region: RegionKind,
        op: OpKind,
        status: Status,
        offset: usize,
        len: usize,
    },
    /// Torn-write mode: a non-final chunk of a write was applied.
    ChunkApplied {
        req: u64,
        target: ReplicaId,
    },
    /// A completion is waiting in `issuer`'s completion queue.
    Completion {
        issuer: ReplicaId,
        req: u64,
    },
    Permission {
        target: ReplicaId,
        action: PermAction,
        ok: bool,
    },
    Timer {
        replica: ReplicaId,
        token: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub time: Time,
    pub event: FabricEvent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Body {
    Deliver(u64),
    Chunk(u64, usize),
    Complete(u64),
    Perm(ReplicaId, PermAction),
    Timer(ReplicaId, u64),
}

#[derive(Debug, Clone, Copy)]
struct Scheduled {
    time: Time,
    replica: u8,
    rank: u8,
    seq: u64,
    body: Body,
}

impl Scheduled {
    fn key(&self) -> (Time, u8, u8, u64) {
        (self.time, self.replica, self.rank, self.seq)
    }
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}
impl Eq for Scheduled {}
impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

#[derive(Debug)]
struct Region {
    bytes: Vec<u8>,
    holder: Option<ReplicaId>,
    /// Offset and period of a u64 that reads as the owner's active-tick
    /// count divided by the period.
    counter: Option<(usize, Time)>,
}

#[derive(Debug, Default)]
struct QueuePair {
    error: bool,
    last_delivery: Option<Time>,
    pending: VecDeque<u64>,
}

#[derive(Debug)]
struct Request {
    issuer: ReplicaId,
    target: ReplicaId,
    plane: Plane,
    op: OpKind,
    region: RegionKind,
    offset: usize,
    len: usize,
    payload: Vec<u8>,
    issued_at: Time,
    doomed: bool,
    status: Status,
    data: Vec<u8>,
}

#[derive(Debug, Clone, Copy)]
struct Activity {
    liveness: Liveness,
    /// Ticks spent alive and unpaused before `since`.
    accumulated: Time,
    since: Time,
}

pub struct Fabric {
    cfg: FabricConfig,
    now: Time,
    rng: ChaCha8Rng,
    seq: u64,
    next_req: u64,
    queue: BinaryHeap<Reverse<Scheduled>>,
    regions: BTreeMap<(ReplicaId, RegionKind), Region>,
    qps: BTreeMap<(ReplicaId, ReplicaId, Plane), QueuePair>,
    requests: BTreeMap<u64, Request>,
    ready: BTreeMap<ReplicaId, VecDeque<WorkCompletion>>,
    tokens: BTreeMap<(ReplicaId, ReplicaId), u8>,
    spikes: BTreeMap<(ReplicaId, ReplicaId), Time>,
    activity: BTreeMap<ReplicaId, Activity>,
    trace: Vec<TraceEvent>,
}

impl Fabric {
    pub fn new(cfg: FabricConfig) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Fabric {
            cfg,
            now: 0,
            rng,
            seq: 0,
            next_req: 1,
            queue: BinaryHeap::new(),
            regions: BTreeMap::new(),
            qps: BTreeMap::new(),
            requests: BTreeMap::new(),
            ready: BTreeMap::new(),
            tokens: BTreeMap::new(),
            spikes: BTreeMap::new(),
            activity: BTreeMap::new(),
            trace: Vec::new(),
        }
    }

    pub fn config(&self) -> &FabricConfig {
        &self.cfg
    }

    pub fn now(&self) -> Time {
        self.now
    }

    pub fn trace(&self) -> &[TraceEvent] {
        &self.trace
    }

    pub fn take_trace(&mut self) -> Vec<TraceEvent> {
        core::mem::take(&mut self.trace)
    }

    pub fn emit(&mut self, replica: ReplicaId, kind: EventKind) {
        self.trace.push(TraceEvent::new(self.now, replica, kind));
    }

    pub fn emit_client(&mut self, kind: EventKind) {
        self.trace.push(TraceEvent::client(self.now, kind));
    }

    pub fn register_region(
        &mut self,
        owner: ReplicaId,
        kind: RegionKind,
        size: usize,
    ) -> Result<()> {
        if self.regions.contains_key(&(owner, kind)) {
            return Err(Error::DuplicateRegion { owner, kind });
        }
        self.regions.insert(
            (owner, kind),
            Region {
                bytes: vec![0; size],
                holder: None,
                counter: None,
            },
        );
        self.activity.entry(owner).or_insert(Activity {
            liveness: Liveness::Alive,
            accumulated: 0,
            since: self.now,
        });
        Ok(())
    }

    /// Makes the u64 at `offset` of the region count the owner's alive and
    /// unpaused time in units of `period` ticks.
    pub fn register_counter(
        &mut self,
        owner: ReplicaId,
        kind: RegionKind,
        offset: usize,
        period: Time,
    ) -> Result<()> {
        let region = self
            .regions
            .get_mut(&(owner, kind))
            .ok_or(Error::UnknownRegion { owner, kind })?;
        check_bounds(region.bytes.len(), offset, 8)?;
        if period == 0 {
            return Err(Error::Config("heartbeat period must be positive".into()));
        }
        region.counter = Some((offset, period));
        Ok(())
    }

    pub fn region_size(&self, owner: ReplicaId, kind: RegionKind) -> Result<usize> {
        self.regions
            .get(&(owner, kind))
            .map(|r| r.bytes.len())
            .ok_or(Error::UnknownRegion { owner, kind })
    }

    /// Local (CPU) view of a replica's own region.
    pub fn bytes(&mut self, owner: ReplicaId, kind: RegionKind) -> &[u8] {
        self.sync_counter(owner, kind);
        &self.regions[&(owner, kind)].bytes
    }

    /// Local (CPU) write to a replica's own region; applied immediately.
    pub fn write_local(
        &mut self,
        owner: ReplicaId,
        kind: RegionKind,
        offset: usize,
        data: &[u8],
    ) -> Result<()> {
        let region = self
            .regions
            .get_mut(&(owner, kind))
            .ok_or(Error::UnknownRegion { owner, kind })?;
        check_bounds(region.bytes.len(), offset, data.len())?;
        region.bytes[offset..offset + data.len()].copy_from_slice(data);
        Ok(())
    }

    pub fn holder(&self, owner: ReplicaId) -> Option<ReplicaId> {
        self.regions
            .get(&(owner, RegionKind::Log))
            .and_then(|r| r.holder)
    }

    pub fn qp_status(&self, issuer: ReplicaId, target: ReplicaId, plane: Plane) -> QpStatus {
        match self.qps.get(&(issuer, target, plane)) {
            Some(qp) if qp.error => QpStatus::Error,
            _ => QpStatus::Operational,
        }
    }

    pub fn liveness(&self, r: ReplicaId) -> Liveness {
        self.activity
            .get(&r)
            .map_or(Liveness::Crashed, |a| a.liveness)
    }

    pub fn is_crashed(&self, r: ReplicaId) -> bool {
        self.liveness(r) == Liveness::Crashed
    }

    /// Ticks `r` has spent alive and unpaused.
    pub fn active_ticks(&self, r: ReplicaId) -> Time {
        match self.activity.get(&r) {
            Some(a) if a.liveness == Liveness::Alive => a.accumulated + (self.now - a.since),
            Some(a) => a.accumulated,
            None => 0,
        }
    }

    pub fn crash(&mut self, r: ReplicaId) {
        self.freeze(r, Liveness::Crashed);
        self.ready.remove(&r);
    }

    pub fn pause(&mut self, r: ReplicaId) {
        if self.liveness(r) == Liveness::Alive {
            self.freeze(r, Liveness::Paused);
        }
    }

    pub fn resume(&mut self, r: ReplicaId) {
        let now = self.now;
        if let Some(a) = self.activity.get_mut(&r) {
            if a.liveness == Liveness::Paused {
                a.liveness = Liveness::Alive;
                a.since = now;
            }
        }
    }

    fn freeze(&mut self, r: ReplicaId, to: Liveness) {
        let ticks = self.active_ticks(r);
        if let Some(a) = self.activity.get_mut(&r) {
            a.accumulated = ticks;
            a.liveness = to;
        }
    }

    /// Adds `amount` ticks to every request from `from` to `to` until cleared.
    pub fn set_delay_spike(&mut self, from: ReplicaId, to: ReplicaId, amount: Time) {
        if amount == 0 {
            self.spikes.remove(&(from, to));
        } else {
            self.spikes.insert((from, to), amount);
        }
    }

    pub fn post_write(
        &mut self,
        issuer: ReplicaId,
        target: ReplicaId,
        plane: Plane,
        region: RegionKind,
        offset: usize,
        payload: Vec<u8>,
    ) -> Result<u64> {
        let len = payload.len();
        self.post(
            issuer,
            target,
            plane,
            OpKind::Write,
            region,
            offset,
            len,
            payload,
        )
    }

    pub fn post_read(
        &mut self,
        issuer: ReplicaId,
        target: ReplicaId,
        plane: Plane,
        region: RegionKind,
        offset: usize,
        len: usize,
    ) -> Result<u64> {
        self.post(
            issuer,
            target,
            plane,
            OpKind::Read,
            region,
            offset,
            len,
            Vec::new(),
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn post(
        &mut self,
        issuer: ReplicaId,
        target: ReplicaId,
        plane: Plane,
        op: OpKind,
        region: RegionKind,
        offset: usize,
        len: usize,
        payload: Vec<u8>,
    ) -> Result<u64> {
        let size = self.region_size(target, region)?;
        check_bounds(size, offset, len)?;
        debug_assert!(
            !self.is_crashed(issuer),
            "crashed replica {issuer} posted a request"
        );
        let id = self.next_req;
        self.next_req += 1;
        self.emit(
            issuer,
            EventKind::Post {
                req: id,
                plane,
                op,
                target,
                region,
                offset: offset as u32,
                len: len as u32,
            },
        );
        let mut req = Request {
            issuer,
            target,
            plane,
            op,
            region,
            offset,
            len,
            payload,
            issued_at: self.now,
            doomed: false,
            status: Status::Ok,
            data: Vec::new(),
        };
        if self.is_crashed(target) {
            req.status = Status::TargetCrashed;
            self.requests.insert(id, req);
            let at = self.now + self.cfg.conn_timeout;
            self.schedule(at, issuer, 1, Body::Complete(id));
            return Ok(id);
        }
        let latency = if issuer == target {
            self.cfg.loopback
        } else {
            let model = match plane {
                Plane::Replication => self.cfg.replication,
                Plane::Background => self.cfg.background,
            };
            let jitter = if model.jitter == 0 {
                0
            } else {
                self.rng.gen_range(0..=model.jitter)
            };
            model.base + jitter + self.spikes.get(&(issuer, target)).copied().unwrap_or(0)
        };
        let chunks = self.chunk_count(op, len);
        let qp = self.qps.entry((issuer, target, plane)).or_default();
        req.doomed = qp.error;
        let earliest = self.now + latency;
        let deliver = qp
            .last_delivery
            .map_or(earliest, |last| earliest.max(last + 1));
        qp.last_delivery = Some(deliver + chunks as Time - 1);
        qp.pending.push_back(id);
        self.requests.insert(id, req);
        self.schedule(deliver, issuer, 0, Body::Deliver(id));
        Ok(id)
    }

    fn chunk_count(&self, op: OpKind, len: usize) -> usize {
        if op == OpKind::Write && self.cfg.torn_writes && self.cfg.chunk > 0 && len > self.cfg.chunk
        {
            len.div_ceil(self.cfg.chunk)
        } else {
            1
        }
    }

    /// Records that `requester` asked `target`'s permission worker for write
    /// access; enables exactly one grant.
    pub fn note_permission_request(&mut self, target: ReplicaId, requester: ReplicaId) {
        self.tokens.insert((target, requester), 1);
        self.emit(target, EventKind::PermRequest { requester });
    }

    /// Schedules a permission change on `target`'s log to take effect at `at`.
    pub fn schedule_permission(&mut self, target: ReplicaId, action: PermAction, at: Time) {
        self.schedule(at, target, 0, Body::Perm(target, action));
    }

    /// Applies a permission change immediately. A grant without an unconsumed
    /// token is refused and recorded as a violation.
    pub fn set_write_permission(&mut self, target: ReplicaId, action: PermAction) -> Result<bool> {
        if !self.regions.contains_key(&(target, RegionKind::Log)) {
            return Err(Error::UnknownRegion {
                owner: target,
                kind: RegionKind::Log,
            });
        }
        match action {
            PermAction::Revoke => {
                let old = self.take_holder(target);
                self.emit(target, EventKind::Revoke { holder: old });
                Ok(true)
            }
            PermAction::Grant(q) => {
                if self.tokens.get(&(target, q)).copied().unwrap_or(0) == 0 {
                    self.emit(
                        target,
                        EventKind::Violation {
                            detail: format!("grant to {q} without a pending request"),
                        },
                    );
                    return Ok(false);
                }
                self.tokens.insert((target, q), 0);
                let old = self.take_holder(target);
                if old.is_some() {
                    self.emit(target, EventKind::Revoke { holder: old });
                }
                if let Some(r) = self.regions.get_mut(&(target, RegionKind::Log)) {
                    r.holder = Some(q);
                }
                if let Some(qp) = self.qps.get_mut(&(q, target, Plane::Replication)) {
                    qp.error = false;
                }
                self.emit(target, EventKind::Grant { requester: q });
                Ok(true)
            }
        }
    }

    fn take_holder(&mut self, target: ReplicaId) -> Option<ReplicaId> {
        let old = self
            .regions
            .get_mut(&(target, RegionKind::Log))
            .and_then(|r| r.holder.take());
        if let Some(h) = old {
            self.fail_qp(h, target, Plane::Replication);
        }
        old
    }

    fn fail_qp(&mut self, issuer: ReplicaId, target: ReplicaId, plane: Plane) {
        let qp = self.qps.entry((issuer, target, plane)).or_default();
        qp.error = true;
        for id in qp.pending.iter() {
            if let Some(r) = self.requests.get_mut(id) {
                r.doomed = true;
            }
        }
    }

    pub fn schedule_timer(&mut self, replica: ReplicaId, at: Time, token: u64) {
        self.schedule(at.max(self.now), replica, 2, Body::Timer(replica, token));
    }

    fn schedule(&mut self, time: Time, replica: ReplicaId, rank: u8, body: Body) {
        let seq = self.seq;
        self.seq += 1;
        self.queue.push(Reverse(Scheduled {
            time,
            replica: replica.0,
            rank,
            seq,
            body,
        }));
    }

    /// Moves the clock forward without processing events.
    pub fn advance_to(&mut self, t: Time) {
        debug_assert!(self.peek_time().is_none_or(|next| next >= t));
        self.now = self.now.max(t);
    }

    pub fn has_pending(&self) -> bool {
        !self.queue.is_empty()
    }

    /// Time of the next scheduled event, if any.
    pub fn peek_time(&self) -> Option<Time> {
        self.queue.peek().map(|Reverse(s)| s.time)
    }

    /// Returns and removes all completions available to `issuer`, in
    /// completion-time order.
    pub fn poll_completions(&mut self, issuer: ReplicaId) -> Vec<WorkCompletion> {
        self.ready
            .get_mut(&issuer)
            .map(|q| q.drain(..).collect())
            .unwrap_or_default()
    }

    /// Processes the next event. `None` once the event set is empty.
    pub fn advance(&mut self) -> Option<Step> {
        while let Some(Reverse(ev)) = self.queue.pop() {
            self.now = ev.time;
            let out = match ev.body {
                Body::Deliver(id) => self.deliver(id),
                Body::Chunk(id, k) => self.apply_chunk(id, k),
                Body::Complete(id) => self.complete(id),
                Body::Perm(target, action) => {
                    if self.is_crashed(target) {
                        None
                    } else {
                        let ok = self.set_write_permission(target, action).unwrap_or(false);
                        Some(FabricEvent::Permission { target, action, ok })
                    }
                }
                Body::Timer(replica, token) => {
                    (!self.is_crashed(replica)).then_some(FabricEvent::Timer { replica, token })
                }
            };
            if let Some(event) = out {
                return Some(Step {
                    time: self.now,
                    event,
                });
            }
        }
        None
    }

    fn sync_counter(&mut self, owner: ReplicaId, kind: RegionKind) {
        let ticks = self.active_ticks(owner);
        if let Some(region) = self.regions.get_mut(&(owner, kind)) {
            if let Some((off, period)) = region.counter {
                write_u64(&mut region.bytes, off, ticks / period);
            }
        }
    }

    fn unqueue(&mut self, id: u64) {
        let Some(r) = self.requests.get(&id) else {
            return;
        };
        if let Some(qp) = self.qps.get_mut(&(r.issuer, r.target, r.plane)) {
            if let Some(pos) = qp.pending.iter().position(|&p| p == id) {
                qp.pending.remove(pos);
            }
        }
    }

    fn deliver(&mut self, id: u64) -> Option<FabricEvent> {
        let (issuer, target, plane, op, region, offset, len, doomed, issued_at) = {
            let r = self.requests.get(&id)?;
            (
                r.issuer,
                r.target,
                r.plane,
                r.op,
                r.region,
                r.offset,
                r.len,
                r.doomed,
                r.issued_at,
            )
        };
        if self.is_crashed(issuer) {
            self.unqueue(id);
            self.requests.remove(&id);
            return None;
        }
        let qp_error = self
            .qps
            .get(&(issuer, target, plane))
            .is_some_and(|q| q.error);
        let status = if self.is_crashed(target) {
            Status::TargetCrashed
        } else if doomed || qp_error {
            Status::PermissionDenied
        } else if op == OpKind::Write
            && region == RegionKind::Log
            && self.holder(target) != Some(issuer)
        {
            self.fail_qp(issuer, target, plane);
            Status::PermissionDenied
        } else {
            Status::Ok
        };

        if status == Status::Ok && op == OpKind::Write {
            let chunks = self.chunk_count(op, len);
            if chunks > 1 {
                return self.apply_chunk(id, 0);
            }
            let req = &self.requests[&id];
            let data = req.payload.clone();
            let bytes = &mut self
                .regions
                .get_mut(&(target, region))
                .expect("checked at post")
                .bytes;
            bytes[offset..offset + len].copy_from_slice(&data);
        } else if status == Status::Ok {
            self.sync_counter(target, region);
            let data = self.regions[&(target, region)].bytes[offset..offset + len].to_vec();
            self.requests.get_mut(&id).expect("present").data = data;
        }
        self.finish_delivery(id, status, issued_at)
    }

    fn finish_delivery(&mut self, id: u64, status: Status, issued_at: Time) -> Option<FabricEvent> {
        self.unqueue(id);
        let r = self.requests.get_mut(&id).expect("present");
        r.status = status;
        let (issuer, target, region, op, offset, len) =
            (r.issuer, r.target, r.region, r.op, r.offset, r.len);
        self.emit(
            issuer,
            EventKind::Apply {
                req: id,
                target,
                region,
                op,
                status,
            },
        );
        let at = if status == Status::TargetCrashed {
            self.now.max(issued_at + self.cfg.conn_timeout)
        } else {
            self.now
        };
        self.schedule(at, issuer, 1, Body::Complete(id));
        Some(FabricEvent::Delivered {
            req: id,
            issuer,
            target,
            region,
            op,
            status,
            offset,
            len,
        })
    }

    fn apply_chunk(&mut self, id: u64, k: usize) -> Option<FabricEvent> {
        let r = self.requests.get(&id)?;
        let (issuer, target, region, offset, len, issued_at, doomed) = (
            r.issuer,
            r.target,
            r.region,
            r.offset,
            r.len,
            r.issued_at,
            r.doomed,
        );
        if self.is_crashed(issuer) {
            self.unqueue(id);
            self.requests.remove(&id);
            return None;
        }
        if self.is_crashed(target) {
            return self.finish_delivery(id, Status::TargetCrashed, issued_at);
        }
        if doomed {
            // Access lost mid-transfer: the prefix stays, the rest is dropped.
            return self.finish_delivery(id, Status::PermissionDenied, issued_at);
        }
        let chunk = self.cfg.chunk;
        let lo = k * chunk;
        let hi = (lo + chunk).min(len);
        let piece = r.payload[lo..hi].to_vec();
        let bytes = &mut self
            .regions
            .get_mut(&(target, region))
            .expect("checked at post")
            .bytes;
        bytes[offset + lo..offset + hi].copy_from_slice(&piece);
        self.emit(
            issuer,
            EventKind::Chunk {
                req: id,
                target,
                upto: hi as u32,
            },
        );
        if hi == len {
            self.finish_delivery(id, Status::Ok, issued_at)
        } else {
            self.schedule(self.now + 1, issuer, 0, Body::Chunk(id, k + 1));
            Some(FabricEvent::ChunkApplied { req: id, target })
        }
    }

    fn complete(&mut self, id: u64) -> Option<FabricEvent> {
        let r = self.requests.remove(&id)?;
        if self.is_crashed(r.issuer) {
            return None;
        }
        self.emit(
            r.issuer,
            EventKind::Complete {
                req: id,
                status: r.status,
            },
        );
        let wc = WorkCompletion {
            req: id,
            target: r.target,
            plane: r.plane,
            op: r.op,
            status: r.status,
            data: r.data,
            time: self.now,
        };
        self.ready.entry(r.issuer).or_default().push_back(wc);
        Some(FabricEvent::Completion {
            issuer: r.issuer,
            req: id,
        })
    }
}

fn check_bounds(size: usize, offset: usize, len: usize) -> Result<()> {
    if offset.checked_add(len).is_none_or(|end| end > size) {
        return Err(Error::OutOfBounds { offset, len, size });
    }
    Ok(())
}
