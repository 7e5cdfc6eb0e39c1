//! Replication plane: the leader's propose driver and the replayer.
//!
//! The leader is an event-driven state machine. Each stage posts one-sided
//! requests and waits for their completions; completions that belong to an
//! earlier stage are recognised by an epoch stamp and only inspected for
//! failures.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::vec;
use alloc::vec::Vec;

use crate::background::{derived_floor, recycle_span, write_allowed, BgLayout};
use crate::fabric::{Fabric, WorkCompletion};
use crate::kv::KvStore;
use crate::log::{read_u64, LogLayout, LogView, SlotImage, FUO_OFFSET, MIN_PROPOSAL_OFFSET};
use crate::trace::{AbortReason, EventKind, OpKind, Phase, Status};
use crate::types::{majority, Plane, RegionKind, ReplicaId, Time};

/// Timer token the harness routes to [`Leader::on_timer`] for the
/// permission grace window.
pub const TIMER_GRACE: u64 = 2;
/// Timer token for recycling retries.
pub const TIMER_RECYCLE: u64 = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtocolConfig {
    pub n: usize,
    pub log: LogLayout,
    pub bg: BgLayout,
    /// Skip the prepare phase after it found only empty slots.
    pub omit_prepare: bool,
    /// Bring lagging followers up to date on takeover and when they join.
    pub update_followers: bool,
    pub recycling: bool,
    /// How long to wait for stragglers once a majority acked.
    pub grace: Time,
    /// Minimum spacing between recycling rounds.
    pub recycle_period: Time,
}

/// Smallest proposal number above `above` owned by `me`.
pub fn next_proposal(me: ReplicaId, n: usize, above: u64) -> u64 {
    let n = n as u64;
    let base = above + 1;
    base + (me.0 as u64 + n - base % n) % n
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClientRequest {
    pub op: u64,
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Follower,
    Permission,
    Idle,
    CatchUpRead,
    CatchUpCopyRead,
    CatchUpCopyWrite,
    Update,
    GrowRead,
    GrowUpdate,
    PrepareRead,
    PrepareWrite,
    Accept,
    WaitCapacity,
    RecyclePush,
    RecycleHeads,
    RecycleZero,
    Draining,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tag {
    PermRequest,
    FuoRead,
    CopyRead(u64),
    Write,
    MinPropRead,
    SlotRead,
    Accept,
    HeadRead,
    Push,
}

#[derive(Debug, Clone, Copy)]
struct Pending {
    tag: Tag,
    peer: ReplicaId,
    epoch: u64,
}

pub struct Leader {
    me: ReplicaId,
    cfg: ProtocolConfig,
    stage: Stage,
    believes_leader: bool,
    epoch: u64,
    pending: BTreeMap<u64, Pending>,
    /// Requests the current all-wait stage still needs.
    waiting: BTreeSet<u64>,
    /// Replicas that completed the current majority-wait stage.
    done: BTreeSet<ReplicaId>,
    confirmed: BTreeSet<ReplicaId>,
    seq: u8,
    majority_at: Option<Time>,
    prop_num: u64,
    max_seen: u64,
    omit: bool,
    takeover_done: bool,
    floor: u64,
    known_fuo: BTreeMap<ReplicaId, u64>,
    /// Peers an operation reported crashed. Crashes are permanent.
    dead: BTreeSet<ReplicaId>,
    fuos: BTreeMap<ReplicaId, u64>,
    catch_up_target: (u64, ReplicaId),
    copied: Vec<(u64, Vec<u8>)>,
    grow: BTreeSet<ReplicaId>,
    max_min_prop: u64,
    slots: BTreeMap<ReplicaId, SlotImage>,
    index: u64,
    value: Vec<u8>,
    heads: BTreeMap<ReplicaId, u64>,
    heads_blocked: bool,
    zero_hi: u64,
    capacity_wait: bool,
    last_recycle: Option<Time>,
    queue: VecDeque<ClientRequest>,
    bounced: Vec<ClientRequest>,
    call: Option<u64>,
    calls: u64,
}

impl Leader {
    pub fn new(me: ReplicaId, cfg: ProtocolConfig) -> Self {
        Leader {
            me,
            cfg,
            stage: Stage::Follower,
            believes_leader: false,
            epoch: 0,
            pending: BTreeMap::new(),
            waiting: BTreeSet::new(),
            done: BTreeSet::new(),
            confirmed: BTreeSet::new(),
            seq: 0,
            majority_at: None,
            prop_num: 0,
            max_seen: 0,
            omit: false,
            takeover_done: false,
            floor: 0,
            known_fuo: BTreeMap::new(),
            dead: BTreeSet::new(),
            fuos: BTreeMap::new(),
            catch_up_target: (0, me),
            copied: Vec::new(),
            grow: BTreeSet::new(),
            max_min_prop: 0,
            slots: BTreeMap::new(),
            index: 0,
            value: Vec::new(),
            heads: BTreeMap::new(),
            heads_blocked: false,
            zero_hi: 0,
            capacity_wait: false,
            last_recycle: None,
            queue: VecDeque::new(),
            bounced: Vec::new(),
            call: None,
            calls: 0,
        }
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn is_active_leader(&self) -> bool {
        self.stage != Stage::Follower
    }

    pub fn confirmed(&self) -> &BTreeSet<ReplicaId> {
        &self.confirmed
    }

    pub fn owns(&self, req: u64) -> bool {
        self.pending.contains_key(&req)
    }

    pub fn queued(&self) -> impl Iterator<Item = &ClientRequest> {
        self.queue.iter()
    }

    /// Client requests handed back after losing leadership.
    pub fn take_bounced(&mut self) -> Vec<ClientRequest> {
        core::mem::take(&mut self.bounced)
    }

    pub fn enqueue(&mut self, fabric: &mut Fabric, req: ClientRequest) {
        if self.queue.iter().any(|q| q.op == req.op) {
            return;
        }
        self.queue.push_back(req);
        if self.stage == Stage::Idle {
            self.after_idle(fabric);
        }
    }

    fn maj(&self) -> usize {
        majority(self.cfg.n)
    }

    fn my_fuo(&self, fabric: &mut Fabric) -> u64 {
        read_u64(fabric.bytes(self.me, RegionKind::Log), FUO_OFFSET)
    }

    fn set_my_fuo(&self, fabric: &mut Fabric, fuo: u64) {
        fabric
            .write_local(self.me, RegionKind::Log, FUO_OFFSET, &fuo.to_le_bytes())
            .expect("header in bounds");
        fabric.emit(self.me, EventKind::LocalFuo { fuo });
    }

    fn emit(&self, fabric: &mut Fabric, kind: EventKind) {
        fabric.emit(self.me, kind);
    }

    fn track(&mut self, req: u64, tag: Tag, peer: ReplicaId, wait: bool) {
        self.pending.insert(
            req,
            Pending {
                tag,
                peer,
                epoch: self.epoch,
            },
        );
        if wait {
            self.waiting.insert(req);
        }
    }

    fn read(
        &mut self,
        fabric: &mut Fabric,
        peer: ReplicaId,
        offset: usize,
        len: usize,
        tag: Tag,
        wait: bool,
    ) {
        let req = fabric
            .post_read(
                self.me,
                peer,
                Plane::Replication,
                RegionKind::Log,
                offset,
                len,
            )
            .expect("log offsets in bounds");
        self.track(req, tag, peer, wait);
    }

    fn write(
        &mut self,
        fabric: &mut Fabric,
        peer: ReplicaId,
        offset: usize,
        bytes: Vec<u8>,
        tag: Tag,
        wait: bool,
    ) -> u64 {
        let req = fabric
            .post_write(
                self.me,
                peer,
                Plane::Replication,
                RegionKind::Log,
                offset,
                bytes,
            )
            .expect("log offsets in bounds");
        self.track(req, tag, peer, wait);
        req
    }

    fn write_fuo(&mut self, fabric: &mut Fabric, peer: ReplicaId, fuo: u64, tag: Tag, wait: bool) {
        let req = self.write(
            fabric,
            peer,
            FUO_OFFSET,
            fuo.to_le_bytes().to_vec(),
            tag,
            wait,
        );
        self.emit(
            fabric,
            EventKind::FuoWrite {
                req,
                target: peer,
                fuo,
            },
        );
        self.known_fuo.insert(peer, fuo);
    }

    /// Copies logical `[from, to)` of the local log to `peer`, one write per
    /// physically contiguous run.
    fn copy_slots(&mut self, fabric: &mut Fabric, peer: ReplicaId, from: u64, to: u64) {
        let layout = self.cfg.log;
        let w = layout.slot_width();
        let mut lo = from.max(to.saturating_sub(layout.capacity() - 1));
        while lo < to {
            let run = layout.contiguous_run(lo, to - lo);
            let off = layout.slot_span(lo).0;
            let bytes =
                fabric.bytes(self.me, RegionKind::Log)[off..off + run as usize * w].to_vec();
            let req = self.write(fabric, peer, off, bytes.clone(), Tag::Write, true);
            self.emit_slot_writes(fabric, req, peer, lo, &bytes);
            lo += run;
        }
    }

    fn emit_slot_writes(
        &self,
        fabric: &mut Fabric,
        req: u64,
        target: ReplicaId,
        lo: u64,
        bytes: &[u8],
    ) {
        let layout = self.cfg.log;
        for (k, img) in bytes.chunks(layout.slot_width()).enumerate() {
            if let SlotImage::Entry { proposal, value } = layout.decode_slot(img) {
                let index = lo + k as u64;
                self.emit(
                    fabric,
                    EventKind::SlotWrite {
                        req,
                        target,
                        index,
                        proposal,
                        value,
                    },
                );
            }
        }
    }

    /// The election changed its estimate.
    pub fn on_role(&mut self, fabric: &mut Fabric, is_leader: bool) {
        self.believes_leader = is_leader;
        if is_leader {
            if self.stage == Stage::Follower {
                if self.pending.is_empty() {
                    self.start_permission(fabric);
                } else {
                    self.stage = Stage::Draining;
                }
            }
        } else if matches!(
            self.stage,
            Stage::Permission | Stage::Idle | Stage::WaitCapacity
        ) {
            self.go_follower(fabric);
        }
    }

    pub fn on_timer(&mut self, fabric: &mut Fabric, token: u64) {
        match (token, self.stage) {
            (TIMER_GRACE, Stage::Permission) => self.check_acks(fabric),
            (TIMER_RECYCLE, Stage::WaitCapacity) => self.start_recycle(fabric),
            (TIMER_RECYCLE, Stage::Idle) => self.after_idle(fabric),
            _ => {}
        }
    }

    /// Something was written to this replica's memory; re-check acks.
    pub fn on_wake(&mut self, fabric: &mut Fabric) {
        match self.stage {
            Stage::Permission => self.check_acks(fabric),
            Stage::Idle => self.after_idle(fabric),
            _ => {}
        }
    }

    fn go_follower(&mut self, fabric: &mut Fabric) {
        if self.call.take().is_some() {
            self.emit(
                fabric,
                EventKind::Abort {
                    reason: AbortReason::Deposed,
                },
            );
        }
        self.stage = Stage::Follower;
        self.epoch += 1;
        self.confirmed.clear();
        self.waiting.clear();
        self.omit = false;
        self.takeover_done = false;
        self.capacity_wait = false;
        self.bounced.extend(self.queue.drain(..));
    }

    fn start_permission(&mut self, fabric: &mut Fabric) {
        self.epoch += 1;
        self.stage = Stage::Permission;
        self.seq = self.seq % 255 + 1;
        self.confirmed.clear();
        self.waiting.clear();
        self.majority_at = None;
        self.omit = false;
        self.takeover_done = false;
        self.capacity_wait = false;
        self.emit(
            fabric,
            EventKind::Phase {
                phase: Phase::Permission,
            },
        );
        let bg = self.cfg.bg;
        for p in 0..self.cfg.n {
            let peer = ReplicaId(p as u8);
            let req = fabric
                .post_write(
                    self.me,
                    peer,
                    Plane::Background,
                    RegionKind::Background,
                    bg.request_offset(self.me),
                    vec![self.seq],
                )
                .expect("request offset in bounds");
            self.track(req, Tag::PermRequest, peer, false);
        }
    }

    fn acked(&self, fabric: &mut Fabric) -> BTreeSet<ReplicaId> {
        let bg = self.cfg.bg;
        let seq = self.seq;
        let bytes = fabric.bytes(self.me, RegionKind::Background);
        (0..self.cfg.n)
            .map(|p| ReplicaId(p as u8))
            .filter(|&p| bytes[bg.ack_offset(p)] == seq)
            .collect()
    }

    fn check_acks(&mut self, fabric: &mut Fabric) {
        if !self.believes_leader {
            self.go_follower(fabric);
            return;
        }
        let acked = self.acked(fabric);
        if !acked.contains(&self.me) || acked.len() < self.maj() {
            return;
        }
        let now = fabric.now();
        let since = match self.majority_at {
            Some(t) => t,
            None => {
                self.majority_at = Some(now);
                fabric.schedule_timer(self.me, now + self.cfg.grace, TIMER_GRACE);
                now
            }
        };
        if acked.len() == self.cfg.n || now >= since + self.cfg.grace {
            self.confirmed = acked;
            self.stage = Stage::Idle;
            self.after_idle(fabric);
        }
    }

    fn late_acks(&self, fabric: &mut Fabric) -> BTreeSet<ReplicaId> {
        let mut acked = self.acked(fabric);
        acked.retain(|p| !self.confirmed.contains(p) && !self.dead.contains(p));
        acked
    }

    fn recycle_due(&self, fabric: &mut Fabric) -> bool {
        if !self.cfg.recycling || !self.takeover_done {
            return false;
        }
        let used = self.my_fuo(fabric).saturating_sub(self.floor);
        used >= self.cfg.log.capacity() / 2 && self.recycle_ready(fabric.now())
    }

    fn recycle_ready(&self, now: Time) -> bool {
        self.last_recycle
            .is_none_or(|t| now >= t + self.cfg.recycle_period)
    }

    fn after_idle(&mut self, fabric: &mut Fabric) {
        if self.stage != Stage::Idle {
            return;
        }
        if !self.believes_leader {
            self.go_follower(fabric);
        } else if self.recycle_due(fabric) {
            self.start_recycle(fabric);
        } else if !self.queue.is_empty() {
            self.begin_propose(fabric);
        } else if self.takeover_done {
            let late = self.late_acks(fabric);
            if !late.is_empty() {
                self.start_grow(fabric, late);
            } else if self.cfg.update_followers {
                self.push_fuo(fabric);
            }
        }
    }

    /// Lets idle followers learn the leader's first undecided offset.
    fn push_fuo(&mut self, fabric: &mut Fabric) {
        let my = self.my_fuo(fabric);
        let behind: Vec<_> = self
            .confirmed
            .iter()
            .copied()
            .filter(|&p| p != self.me && self.known_fuo.get(&p).copied().unwrap_or(0) < my)
            .collect();
        for p in behind {
            self.write_fuo(fabric, p, my, Tag::Push, false);
        }
    }

    fn begin_propose(&mut self, fabric: &mut Fabric) {
        self.calls += 1;
        self.call = Some(self.calls);
        self.emit(fabric, EventKind::ProposeBegin { call: self.calls });
        let late = self.late_acks(fabric);
        if !self.takeover_done {
            self.confirmed.extend(late);
            self.start_catch_up(fabric);
        } else if !late.is_empty() {
            self.start_grow(fabric, late);
        } else {
            self.next_index(fabric);
        }
    }

    fn start_catch_up(&mut self, fabric: &mut Fabric) {
        self.epoch += 1;
        self.stage = Stage::CatchUpRead;
        self.emit(
            fabric,
            EventKind::Phase {
                phase: Phase::CatchUp,
            },
        );
        self.waiting.clear();
        self.fuos.clear();
        let my = self.my_fuo(fabric);
        self.fuos.insert(self.me, my);
        let peers: Vec<_> = self
            .confirmed
            .iter()
            .copied()
            .filter(|&p| p != self.me)
            .collect();
        for p in peers {
            self.read(fabric, p, FUO_OFFSET, 8, Tag::FuoRead, true);
        }
        self.progress(fabric);
    }

    fn start_update(&mut self, fabric: &mut Fabric) {
        let my = self.my_fuo(fabric);
        for (&p, &f) in &self.fuos {
            self.known_fuo.insert(p, f);
        }
        if !self.cfg.update_followers {
            return self.finish_takeover(fabric);
        }
        self.epoch += 1;
        self.stage = Stage::Update;
        self.waiting.clear();
        self.emit(
            fabric,
            EventKind::Phase {
                phase: Phase::UpdateFollowers,
            },
        );
        let behind: Vec<_> = self
            .confirmed
            .iter()
            .copied()
            .filter(|&p| p != self.me)
            .filter_map(|p| self.fuos.get(&p).map(|&f| (p, f)))
            .filter(|&(_, f)| f < my)
            .collect();
        for (p, f) in behind {
            self.copy_slots(fabric, p, f, my);
            self.write_fuo(fabric, p, my, Tag::Write, true);
        }
        self.progress(fabric);
    }

    fn finish_takeover(&mut self, fabric: &mut Fabric) {
        self.takeover_done = true;
        let my = self.my_fuo(fabric);
        self.floor = derived_floor(my, self.cfg.log.capacity());
        self.last_recycle = None;
        self.next_index(fabric);
    }

    fn start_grow(&mut self, fabric: &mut Fabric, members: BTreeSet<ReplicaId>) {
        self.epoch += 1;
        self.stage = Stage::GrowRead;
        self.emit(
            fabric,
            EventKind::Phase {
                phase: Phase::UpdateFollowers,
            },
        );
        self.waiting.clear();
        self.fuos.clear();
        self.grow = members.clone();
        for p in members {
            self.read(fabric, p, FUO_OFFSET, 8, Tag::FuoRead, true);
        }
        self.progress(fabric);
    }

    fn next_index(&mut self, fabric: &mut Fabric) {
        if self.call.is_none() {
            self.stage = Stage::Idle;
            return self.after_idle(fabric);
        }
        let i = self.my_fuo(fabric);
        if !write_allowed(i, self.floor, self.cfg.log.capacity()) {
            self.stage = Stage::WaitCapacity;
            self.capacity_wait = true;
            if !self.cfg.recycling {
                return;
            }
            let now = fabric.now();
            if self.recycle_ready(now) {
                self.start_recycle(fabric);
            } else {
                let at = self.last_recycle.unwrap_or(now) + self.cfg.recycle_period;
                fabric.schedule_timer(self.me, at, TIMER_RECYCLE);
            }
            return;
        }
        self.capacity_wait = false;
        self.index = i;
        if self.omit && self.cfg.omit_prepare {
            self.value = self.queue.front().expect("proposing").payload.clone();
            self.start_accept(fabric);
        } else {
            self.start_prepare_read(fabric);
        }
    }

    fn start_prepare_read(&mut self, fabric: &mut Fabric) {
        self.epoch += 1;
        self.stage = Stage::PrepareRead;
        self.emit(
            fabric,
            EventKind::Phase {
                phase: Phase::Prepare,
            },
        );
        self.done.clear();
        self.max_min_prop = 0;
        let peers: Vec<_> = self.confirmed.iter().copied().collect();
        for p in peers {
            self.read(fabric, p, MIN_PROPOSAL_OFFSET, 8, Tag::MinPropRead, false);
        }
    }

    fn start_prepare_write(&mut self, fabric: &mut Fabric) {
        self.epoch += 1;
        self.stage = Stage::PrepareWrite;
        self.done.clear();
        self.slots.clear();
        let (off, len) = self.cfg.log.slot_span(self.index);
        let peers: Vec<_> = self.confirmed.iter().copied().collect();
        for p in peers {
            let req = self.write(
                fabric,
                p,
                MIN_PROPOSAL_OFFSET,
                self.prop_num.to_le_bytes().to_vec(),
                Tag::Write,
                false,
            );
            self.emit(
                fabric,
                EventKind::MinProposalWrite {
                    req,
                    target: p,
                    proposal: self.prop_num,
                },
            );
            self.read(fabric, p, off, len, Tag::SlotRead, false);
        }
    }

    fn start_accept(&mut self, fabric: &mut Fabric) {
        self.epoch += 1;
        self.stage = Stage::Accept;
        self.emit(
            fabric,
            EventKind::Phase {
                phase: Phase::Accept,
            },
        );
        self.done.clear();
        let image = self
            .cfg
            .log
            .encode_slot(self.prop_num, &self.value)
            .expect("payload sized at submission");
        let off = self.cfg.log.slot_span(self.index).0;
        let peers: Vec<_> = self.confirmed.iter().copied().collect();
        for p in peers {
            let req = self.write(fabric, p, off, image.clone(), Tag::Accept, false);
            self.emit(
                fabric,
                EventKind::SlotWrite {
                    req,
                    target: p,
                    index: self.index,
                    proposal: self.prop_num,
                    value: self.value.clone(),
                },
            );
        }
    }

    fn start_recycle(&mut self, fabric: &mut Fabric) {
        // A readable follower outside the confirmed set blocks recycling.
        let late = self.late_acks(fabric);
        if self.takeover_done && !late.is_empty() {
            return self.start_grow(fabric, late);
        }
        self.last_recycle = Some(fabric.now());
        self.epoch += 1;
        self.waiting.clear();
        self.emit(
            fabric,
            EventKind::Phase {
                phase: Phase::Recycle,
            },
        );
        if self.cfg.update_followers {
            let my = self.my_fuo(fabric);
            let behind: Vec<_> = self
                .confirmed
                .iter()
                .copied()
                .filter(|&p| p != self.me && self.known_fuo.get(&p).copied().unwrap_or(0) < my)
                .collect();
            if !behind.is_empty() {
                self.stage = Stage::RecyclePush;
                for p in behind {
                    self.write_fuo(fabric, p, my, Tag::Write, true);
                }
                return;
            }
        }
        self.start_heads(fabric);
    }

    fn start_heads(&mut self, fabric: &mut Fabric) {
        self.epoch += 1;
        self.stage = Stage::RecycleHeads;
        self.waiting.clear();
        self.heads.clear();
        self.heads_blocked = false;
        let off = self.cfg.bg.log_head_offset();
        let own = read_u64(fabric.bytes(self.me, RegionKind::Background), off);
        self.heads.insert(self.me, own);
        for p in 0..self.cfg.n {
            let peer = ReplicaId(p as u8);
            if peer == self.me {
                continue;
            }
            let req = fabric
                .post_read(
                    self.me,
                    peer,
                    Plane::Background,
                    RegionKind::Background,
                    off,
                    8,
                )
                .expect("head offset in bounds");
            self.track(req, Tag::HeadRead, peer, true);
        }
        self.progress(fabric);
    }

    fn end_recycle(&mut self, fabric: &mut Fabric) {
        self.epoch += 1;
        if self.capacity_wait {
            self.next_index(fabric);
        } else {
            self.stage = Stage::Idle;
            if self.recycle_due_later(fabric) {
                let at = fabric.now() + self.cfg.recycle_period;
                fabric.schedule_timer(self.me, at, TIMER_RECYCLE);
            }
            self.after_idle(fabric);
        }
    }

    fn recycle_due_later(&self, fabric: &mut Fabric) -> bool {
        self.cfg.recycling
            && self.my_fuo(fabric).saturating_sub(self.floor) >= self.cfg.log.capacity() / 2
    }

    fn finish_propose(&mut self, fabric: &mut Fabric) {
        let call = self.call.take().expect("proposing");
        self.emit(
            fabric,
            EventKind::ProposeEnd {
                call,
                index: self.index,
            },
        );
        self.queue.pop_front();
        self.epoch += 1;
        self.stage = Stage::Idle;
        self.after_idle(fabric);
    }

    fn abort(&mut self, fabric: &mut Fabric, reason: AbortReason) {
        if matches!(self.stage, Stage::Follower | Stage::Draining) {
            return;
        }
        self.call = None;
        self.emit(fabric, EventKind::Abort { reason });
        self.epoch += 1;
        self.stage = Stage::Draining;
        self.omit = false;
        self.takeover_done = false;
        self.capacity_wait = false;
        self.waiting.clear();
        self.maybe_finish_drain(fabric);
    }

    fn maybe_finish_drain(&mut self, fabric: &mut Fabric) {
        if self.stage == Stage::Draining && self.pending.is_empty() {
            if self.believes_leader {
                self.start_permission(fabric);
            } else {
                self.go_follower(fabric);
            }
        }
    }

    pub fn on_completion(&mut self, fabric: &mut Fabric, wc: &WorkCompletion) {
        let Some(p) = self.pending.remove(&wc.req) else {
            return;
        };
        let current = p.epoch == self.epoch;
        match wc.status {
            Status::PermissionDenied => {
                if wc.plane == Plane::Replication {
                    self.abort(fabric, AbortReason::PermissionLost);
                }
            }
            Status::TargetCrashed => self.on_crashed(fabric, p, wc.req),
            Status::Ok if current => self.on_ok(fabric, p, wc),
            Status::Ok => {
                if p.tag == Tag::MinPropRead
                    && self.call.is_some()
                    && matches!(self.stage, Stage::PrepareWrite | Stage::Accept)
                    && read_u64(&wc.data, 0) > self.prop_num
                {
                    self.abort(fabric, AbortReason::StaleProposal);
                }
            }
        }
        self.maybe_finish_drain(fabric);
    }

    fn on_crashed(&mut self, fabric: &mut Fabric, p: Pending, req: u64) {
        self.dead.insert(p.peer);
        if matches!(p.tag, Tag::PermRequest | Tag::HeadRead) {
            self.waiting.remove(&req);
            if p.epoch == self.epoch {
                self.progress(fabric);
            }
            return;
        }
        if matches!(self.stage, Stage::Follower | Stage::Draining) {
            return;
        }
        self.waiting.remove(&req);
        self.grow.remove(&p.peer);
        if p.peer != self.me && self.confirmed.remove(&p.peer) && self.confirmed.len() < self.maj()
        {
            return self.abort(fabric, AbortReason::FollowerCrashed);
        }
        if self.stage == Stage::CatchUpCopyRead && p.peer == self.catch_up_target.1 {
            return self.abort(fabric, AbortReason::FollowerCrashed);
        }
        self.progress(fabric);
    }

    fn on_ok(&mut self, fabric: &mut Fabric, p: Pending, wc: &WorkCompletion) {
        self.waiting.remove(&wc.req);
        match p.tag {
            Tag::FuoRead => {
                self.fuos.insert(p.peer, read_u64(&wc.data, 0));
            }
            Tag::CopyRead(lo) => self.copied.push((lo, wc.data.clone())),
            Tag::MinPropRead => {
                self.max_min_prop = self.max_min_prop.max(read_u64(&wc.data, 0));
                self.done.insert(p.peer);
            }
            Tag::SlotRead => {
                self.slots
                    .insert(p.peer, self.cfg.log.decode_slot(&wc.data));
                self.done.insert(p.peer);
            }
            Tag::Accept => {
                self.done.insert(p.peer);
            }
            Tag::HeadRead => {
                if !self.confirmed.contains(&p.peer) {
                    self.heads_blocked = true;
                }
                self.heads.insert(p.peer, read_u64(&wc.data, 0));
            }
            Tag::PermRequest | Tag::Write | Tag::Push => {}
        }
        self.progress(fabric);
    }

    fn quorum_done(&self) -> bool {
        self.done.contains(&self.me) && self.done.len() >= self.maj()
    }

    fn progress(&mut self, fabric: &mut Fabric) {
        match self.stage {
            Stage::CatchUpRead if self.waiting.is_empty() => {
                let mut best = (self.fuos[&self.me], self.me);
                for (&p, &f) in &self.fuos {
                    if f > best.0 {
                        best = (f, p);
                    }
                }
                self.catch_up_target = best;
                let my = self.fuos[&self.me];
                if best.0 <= my {
                    return self.start_update(fabric);
                }
                self.stage = Stage::CatchUpCopyRead;
                self.copied.clear();
                let layout = self.cfg.log;
                let mut lo = my.max(best.0.saturating_sub(layout.capacity() - 1));
                while lo < best.0 {
                    let run = layout.contiguous_run(lo, best.0 - lo);
                    let off = layout.slot_span(lo).0;
                    self.read(
                        fabric,
                        best.1,
                        off,
                        run as usize * layout.slot_width(),
                        Tag::CopyRead(lo),
                        true,
                    );
                    lo += run;
                }
            }
            Stage::CatchUpCopyRead if self.waiting.is_empty() => {
                self.stage = Stage::CatchUpCopyWrite;
                let copied = core::mem::take(&mut self.copied);
                for (lo, bytes) in copied {
                    let off = self.cfg.log.slot_span(lo).0;
                    let req = self.write(fabric, self.me, off, bytes.clone(), Tag::Write, true);
                    self.emit_slot_writes(fabric, req, self.me, lo, &bytes);
                }
            }
            Stage::CatchUpCopyWrite if self.waiting.is_empty() => {
                let target = self.catch_up_target.0;
                self.set_my_fuo(fabric, target);
                self.fuos.insert(self.me, target);
                self.start_update(fabric);
            }
            Stage::Update if self.waiting.is_empty() => self.finish_takeover(fabric),
            Stage::GrowRead if self.waiting.is_empty() => {
                self.epoch += 1;
                self.stage = Stage::GrowUpdate;
                let my = self.my_fuo(fabric);
                let members: Vec<_> = self.grow.iter().copied().collect();
                for p in members {
                    let f = self.fuos.get(&p).copied().unwrap_or(0);
                    self.known_fuo.insert(p, f);
                    if self.cfg.update_followers && f < my {
                        self.copy_slots(fabric, p, f, my);
                        self.write_fuo(fabric, p, my, Tag::Write, true);
                    }
                }
                self.progress(fabric);
            }
            Stage::GrowUpdate if self.waiting.is_empty() => {
                let grow = core::mem::take(&mut self.grow);
                self.confirmed.extend(grow);
                self.omit = false;
                self.next_index(fabric);
            }
            Stage::PrepareRead if self.quorum_done() => {
                let above = self.max_min_prop.max(self.max_seen).max(self.prop_num);
                self.max_seen = self.max_seen.max(self.max_min_prop);
                self.prop_num = next_proposal(self.me, self.cfg.n, above);
                self.start_prepare_write(fabric);
            }
            Stage::PrepareWrite if self.quorum_done() => {
                let best = self
                    .slots
                    .values()
                    .filter_map(|s| match s {
                        SlotImage::Entry { proposal, value } => Some((*proposal, value)),
                        SlotImage::Empty => None,
                    })
                    .max_by_key(|(p, _)| *p);
                match best {
                    Some((_, v)) => self.value = v.clone(),
                    None => {
                        self.value = self.queue.front().expect("proposing").payload.clone();
                        self.omit = true;
                    }
                }
                self.start_accept(fabric);
            }
            Stage::Accept if self.quorum_done() => {
                self.set_my_fuo(fabric, self.index + 1);
                let mine = self.queue.front().is_some_and(|q| q.payload == self.value);
                if mine {
                    self.finish_propose(fabric);
                } else {
                    self.epoch += 1;
                    self.next_index(fabric);
                }
            }
            Stage::RecyclePush if self.waiting.is_empty() => self.start_heads(fabric),
            Stage::RecycleHeads if self.waiting.is_empty() => {
                let min_head = self.heads.values().copied().min().unwrap_or(0);
                let my = self.my_fuo(fabric);
                let span = if self.heads_blocked {
                    None
                } else {
                    recycle_span(self.floor, my, min_head, &self.cfg.log)
                };
                let Some((lo, hi)) = span else {
                    return self.end_recycle(fabric);
                };
                self.epoch += 1;
                self.stage = Stage::RecycleZero;
                self.zero_hi = hi;
                let layout = self.cfg.log;
                let off = layout.slot_span(lo).0;
                let zeros = vec![0u8; (hi - lo) as usize * layout.slot_width()];
                let peers: Vec<_> = self.confirmed.iter().copied().collect();
                for p in peers {
                    let req = self.write(fabric, p, off, zeros.clone(), Tag::Write, true);
                    self.emit(
                        fabric,
                        EventKind::ZeroWrite {
                            req,
                            target: p,
                            lo,
                            hi,
                        },
                    );
                }
            }
            Stage::RecycleZero if self.waiting.is_empty() => {
                self.floor = self.floor.max(self.zero_hi);
                self.end_recycle(fabric);
            }
            _ => {}
        }
    }
}

/// Per-replica commit tracking, follower FUO self-advance and application
/// of committed entries.
#[derive(Debug, Clone, Default)]
pub struct Replayer {
    log_head: u64,
    committed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Applied {
    pub index: u64,
    pub op: Option<u32>,
    pub response: Vec<u8>,
}

impl Replayer {
    pub fn log_head(&self) -> u64 {
        self.log_head
    }

    /// Runs one replayer pass. In follower role, the FUO first advances over
    /// the non-empty slots starting at it, stopping one short of the first
    /// empty slot: an entry proves its predecessor decided, not itself.
    pub fn step(
        &mut self,
        me: ReplicaId,
        fabric: &mut Fabric,
        cfg: &ProtocolConfig,
        follower: bool,
        kv: &mut KvStore,
    ) -> Vec<Applied> {
        let layout = cfg.log;
        let start = read_u64(fabric.bytes(me, RegionKind::Log), FUO_OFFSET);
        let mut fuo = start;
        if follower {
            let view = LogView::new(layout, fabric.bytes(me, RegionKind::Log));
            let mut end = start;
            while end < self.log_head + layout.capacity() && view.is_nonempty(end) {
                end += 1;
            }
            if end > start + 1 {
                fuo = end - 1;
                fabric
                    .write_local(me, RegionKind::Log, FUO_OFFSET, &fuo.to_le_bytes())
                    .expect("header in bounds");
                fabric.emit(me, EventKind::LocalFuo { fuo });
            }
        }
        while self.committed < fuo {
            let i = self.committed;
            let view = LogView::new(layout, fabric.bytes(me, RegionKind::Log));
            let value = view.slot(i).value().map(|v| v.to_vec()).unwrap_or_default();
            fabric.emit(me, EventKind::Commit { index: i, value });
            self.committed += 1;
        }
        let mut applied = Vec::new();
        while self.log_head < self.committed {
            let i = self.log_head;
            let view = LogView::new(layout, fabric.bytes(me, RegionKind::Log));
            let payload = view.slot(i).value().map(|v| v.to_vec()).unwrap_or_default();
            let (op, response) = kv.apply(&payload);
            fabric.emit(me, EventKind::Execute { index: i });
            self.log_head += 1;
            applied.push(Applied {
                index: i,
                op,
                response,
            });
        }
        if !applied.is_empty() {
            let off = cfg.bg.log_head_offset();
            fabric
                .write_local(
                    me,
                    RegionKind::Background,
                    off,
                    &self.log_head.to_le_bytes(),
                )
                .expect("head offset in bounds");
        }
        applied
    }
}

/// Replication-plane operations issued by `replica` in a trace slice.
pub fn count_ops(events: &[crate::trace::TraceEvent], replica: ReplicaId) -> (usize, usize) {
    let mut counts = (0, 0);
    for e in events {
        if let (
            Some(r),
            EventKind::Post {
                plane: Plane::Replication,
                op,
                ..
            },
        ) = (e.replica, &e.kind)
        {
            if r == replica {
                match op {
                    OpKind::Write => counts.0 += 1,
                    OpKind::Read => counts.1 += 1,
                }
            }
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn proposal_numbers() {
        assert_eq!(next_proposal(ReplicaId(1), 3, 0), 1);
        assert_eq!(next_proposal(ReplicaId(1), 3, 5), 7);
        assert_eq!(next_proposal(ReplicaId(0), 3, 7), 9);
        assert_eq!(next_proposal(ReplicaId(0), 3, 0), 3);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn proposal_is_smallest_owned_above(n in 1usize..9, id in 0u8..9, above in 0u64..10_000) {
                prop_assume!((id as usize) < n);
                let p = next_proposal(ReplicaId(id), n, above);
                prop_assert!(p > above);
                prop_assert_eq!(p % n as u64, id as u64);
                // Oracle: linear search.
                let oracle = (above + 1..).find(|x| x % n as u64 == id as u64).unwrap();
                prop_assert_eq!(p, oracle);
            }
        }
    }
}
