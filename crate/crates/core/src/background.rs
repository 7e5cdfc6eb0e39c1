//! Background plane: heartbeat scores and leader election, the permission
//! worker, and log recycling arithmetic.
//!
//! Background region layout (little-endian):
//!
//! ```text
//! [heartbeat: u64 | request: N bytes | ack: N bytes | log_head: u64]
//! ```
//!
//! Request and ack bytes hold a non-zero sequence tag chosen by the
//! requester; zero means "nothing pending".

use alloc::vec;
use alloc::vec::Vec;

use crate::fabric::{Fabric, PermAction};
use crate::log::{read_u64, LogLayout};
use crate::trace::EventKind;
use crate::types::{Plane, RegionKind, ReplicaId, Time};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BgLayout {
    n: usize,
}

impl BgLayout {
    pub const HEARTBEAT_OFFSET: usize = 0;

    pub const fn new(n: usize) -> Self {
        BgLayout { n }
    }

    pub const fn request_offset(&self, requester: ReplicaId) -> usize {
        8 + requester.index()
    }

    pub const fn ack_offset(&self, granter: ReplicaId) -> usize {
        8 + self.n + granter.index()
    }

    pub const fn log_head_offset(&self) -> usize {
        8 + 2 * self.n
    }

    pub const fn size(&self) -> usize {
        16 + 2 * self.n
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScoreParams {
    pub max: u8,
    /// Suspect when the score drops below this.
    pub fail_below: u8,
    /// Trust again when the score rises above this.
    pub recover_above: u8,
}

impl Default for ScoreParams {
    fn default() -> Self {
        ScoreParams {
            max: 15,
            fail_below: 2,
            recover_above: 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScoreEntry {
    pub score: u8,
    pub last_counter: Option<u64>,
    pub alive: bool,
}

impl ScoreEntry {
    pub fn new(params: &ScoreParams) -> Self {
        ScoreEntry {
            score: params.max,
            last_counter: None,
            alive: true,
        }
    }

    /// Folds in one heartbeat read (`None` when the read failed). Returns the
    /// new status if it flipped.
    pub fn update(&mut self, counter: Option<u64>, params: &ScoreParams) -> Option<bool> {
        let changed = counter.is_some() && counter != self.last_counter;
        if changed {
            self.score = (self.score + 1).min(params.max);
        } else {
            self.score = self.score.saturating_sub(1);
        }
        if counter.is_some() {
            self.last_counter = counter;
        }
        let was = self.alive;
        if self.alive && self.score < params.fail_below {
            self.alive = false;
        } else if !self.alive && self.score > params.recover_above {
            self.alive = true;
        }
        (was != self.alive).then_some(self.alive)
    }
}

/// Pull-score failure detector and leader estimate of one replica.
#[derive(Debug, Clone)]
pub struct Election {
    me: ReplicaId,
    params: ScoreParams,
    entries: Vec<ScoreEntry>,
    leader: ReplicaId,
}

impl Election {
    pub fn new(me: ReplicaId, n: usize, params: ScoreParams) -> Self {
        Election {
            me,
            params,
            entries: vec![ScoreEntry::new(&params); n],
            leader: ReplicaId(0),
        }
    }

    pub fn leader(&self) -> ReplicaId {
        self.leader
    }

    pub fn is_leader(&self) -> bool {
        self.leader == self.me
    }

    pub fn entry(&self, peer: ReplicaId) -> &ScoreEntry {
        &self.entries[peer.index()]
    }

    /// Posts a heartbeat read to every peer, outstanding or not; per-pair
    /// FIFO keeps the answers in order. Returns `(request, peer)` pairs.
    pub fn scan(&mut self, fabric: &mut Fabric) -> Vec<(u64, ReplicaId)> {
        let mut posted = Vec::new();
        for p in 0..self.entries.len() {
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
                    BgLayout::HEARTBEAT_OFFSET,
                    8,
                )
                .expect("background region registered for every replica");
            posted.push((req, peer));
        }
        posted
    }

    /// Handles a heartbeat read completion. Emits suspicion changes and
    /// returns the new leader estimate if it changed.
    pub fn on_read(
        &mut self,
        fabric: &mut Fabric,
        peer: ReplicaId,
        data: Option<&[u8]>,
    ) -> Option<ReplicaId> {
        let counter = data.map(|d| read_u64(d, 0));
        if let Some(alive) = self.entries[peer.index()].update(counter, &self.params) {
            let kind = if alive {
                EventKind::Trust { peer }
            } else {
                EventKind::Suspect { peer }
            };
            fabric.emit(self.me, kind);
        }
        let leader = self.estimate();
        if leader != self.leader {
            self.leader = leader;
            fabric.emit(self.me, EventKind::Role { leader });
            Some(leader)
        } else {
            None
        }
    }

    fn estimate(&self) -> ReplicaId {
        (0..self.entries.len())
            .map(|p| ReplicaId(p as u8))
            .find(|&p| p == self.me || self.entries[p.index()].alive)
            .unwrap_or(self.me)
    }
}

/// Serves write-permission requests on the local log, one at a time, lowest
/// requester id first.
#[derive(Debug, Clone, Default)]
pub struct PermissionWorker {
    serving: Option<(ReplicaId, u8)>,
}

impl PermissionWorker {
    pub fn is_busy(&self) -> bool {
        self.serving.is_some()
    }

    /// Lowest requester with a pending request, and its tag.
    pub fn pending(bytes: &[u8], layout: &BgLayout, n: usize) -> Option<(ReplicaId, u8)> {
        (0..n).map(|q| ReplicaId(q as u8)).find_map(|q| {
            let tag = bytes[layout.request_offset(q)];
            (tag != 0).then_some((q, tag))
        })
    }

    /// Starts serving the next pending request, if idle. The revoke and grant
    /// take effect after one and two permission latencies.
    pub fn poll(
        &mut self,
        me: ReplicaId,
        fabric: &mut Fabric,
        layout: &BgLayout,
        n: usize,
    ) -> Option<ReplicaId> {
        if self.serving.is_some() {
            return None;
        }
        let (q, tag) = Self::pending(fabric.bytes(me, RegionKind::Background), layout, n)?;
        fabric
            .write_local(me, RegionKind::Background, layout.request_offset(q), &[0])
            .expect("request offset in bounds");
        fabric.note_permission_request(me, q);
        let l = fabric.config().perm_latency;
        let now = fabric.now();
        fabric.schedule_permission(me, PermAction::Revoke, now + l);
        fabric.schedule_permission(me, PermAction::Grant(q), now + 2 * l);
        self.serving = Some((q, tag));
        Some(q)
    }

    /// The grant to `q` took effect: acknowledge it in `q`'s background
    /// region. Returns the ack request id.
    pub fn on_granted(
        &mut self,
        me: ReplicaId,
        q: ReplicaId,
        fabric: &mut Fabric,
        layout: &BgLayout,
    ) -> Option<u64> {
        match self.serving {
            Some((s, tag)) if s == q => {
                self.serving = None;
                let req = fabric
                    .post_write(
                        me,
                        q,
                        Plane::Background,
                        RegionKind::Background,
                        layout.ack_offset(me),
                        vec![tag],
                    )
                    .expect("ack offset in bounds");
                Some(req)
            }
            _ => None,
        }
    }
}

/// Lowest logical index the leader may assume was zeroed everywhere, given a
/// first undecided offset observed after taking over.
pub const fn derived_floor(fuo: u64, capacity: u64) -> u64 {
    (fuo + 1).saturating_sub(capacity)
}

/// Whether a leader that knows every index below `floor` is zeroed may write
/// logical `index`. One slot always stays free so the log is never full.
pub const fn write_allowed(index: u64, floor: u64, capacity: u64) -> bool {
    index + 2 <= floor + capacity
}

/// Next range to zero: from the known-zeroed floor (never below `fuo - cap`,
/// whose physical slots hold live entries) up to `min_head`, cut at the
/// physical wrap. `None` when nothing is recyclable.
pub fn recycle_span(floor: u64, fuo: u64, min_head: u64, layout: &LogLayout) -> Option<(u64, u64)> {
    let lo = floor.max(fuo.saturating_sub(layout.capacity()));
    if min_head <= lo {
        return None;
    }
    Some((lo, lo + layout.contiguous_run(lo, min_head - lo)))
}

/// Ticks from a heartbeat freeze to suspicion, for a score starting at
/// `score`: each scan period costs one point.
pub fn detection_bound(score: u8, params: &ScoreParams, t_scan: Time) -> Time {
    let steps = score.saturating_sub(params.fail_below) as Time + 1;
    steps * t_scan + t_scan
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fabric::FabricConfig;

    const P: ScoreParams = ScoreParams {
        max: 15,
        fail_below: 2,
        recover_above: 6,
    };

    #[test]
    fn score_rules() {
        let mut e = ScoreEntry {
            score: 6,
            last_counter: Some(1),
            alive: true,
        };
        e.update(Some(2), &P);
        assert_eq!(e.score, 7);
        let mut e = ScoreEntry {
            score: 15,
            last_counter: Some(1),
            alive: true,
        };
        e.update(Some(2), &P);
        assert_eq!(e.score, 15);
        let mut e = ScoreEntry {
            score: 2,
            last_counter: Some(1),
            alive: true,
        };
        assert_eq!(e.update(Some(1), &P), Some(false));
        assert_eq!(e.score, 1);
    }

    #[test]
    fn recovery_needs_score_above_six() {
        let mut e = ScoreEntry {
            score: 0,
            last_counter: Some(0),
            alive: false,
        };
        for c in 1..=6 {
            assert_eq!(e.update(Some(c), &P), None);
        }
        assert_eq!(e.score, 6);
        assert_eq!(e.update(Some(7), &P), Some(true));
    }

    #[test]
    fn scans_to_suspicion_from_full_score() {
        // Independent count: a full score needs (15 - 1) failed reads to drop
        // below 2.
        let mut e = ScoreEntry::new(&P);
        let mut reads = 0;
        while e.alive {
            e.update(None, &P);
            reads += 1;
        }
        assert_eq!(reads, 14);
        assert_eq!(detection_bound(15, &P, 2), 30);
    }

    #[test]
    fn recycle_span_examples() {
        let l = LogLayout::new(8, 64).unwrap();
        let heads: [u64; 3] = [3, 5, 4];
        let min_head = *heads.iter().min().unwrap();
        assert_eq!(recycle_span(0, 6, min_head, &l), Some((0, 3)));
        assert_eq!(recycle_span(0, 6, 0, &l), None);
        // Never reaches below fuo - capacity, and stops at the wrap.
        assert_eq!(recycle_span(0, 20, 19, &l), Some((12, 16)));
    }

    #[test]
    fn write_bound_keeps_one_slot_free() {
        assert!(write_allowed(6, 0, 8));
        assert!(!write_allowed(7, 0, 8));
        assert_eq!(derived_floor(0, 8), 0);
        assert_eq!(derived_floor(10, 8), 3);
        assert!(!write_allowed(10, derived_floor(10, 8), 8));
    }

    fn fabric(n: u8) -> (Fabric, BgLayout) {
        let layout = BgLayout::new(n as usize);
        let mut f = Fabric::new(FabricConfig {
            perm_latency: 5,
            ..FabricConfig::default()
        });
        for r in 0..n {
            f.register_region(ReplicaId(r), RegionKind::Log, 64)
                .unwrap();
            f.register_region(ReplicaId(r), RegionKind::Background, layout.size())
                .unwrap();
        }
        (f, layout)
    }

    #[test]
    fn worker_serves_lowest_requester_first() {
        let (mut f, layout) = fabric(3);
        let me = ReplicaId(0);
        f.write_local(
            me,
            RegionKind::Background,
            layout.request_offset(ReplicaId(1)),
            &[4],
        )
        .unwrap();
        f.write_local(
            me,
            RegionKind::Background,
            layout.request_offset(ReplicaId(2)),
            &[9],
        )
        .unwrap();
        let mut w = PermissionWorker::default();
        assert_eq!(w.poll(me, &mut f, &layout, 3), Some(ReplicaId(1)));
        assert_eq!(w.poll(me, &mut f, &layout, 3), None);
        while let Some(step) = f.advance() {
            if let crate::fabric::FabricEvent::Permission {
                action: PermAction::Grant(q),
                ..
            } = step.event
            {
                w.on_granted(me, q, &mut f, &layout);
                break;
            }
        }
        assert_eq!(f.holder(me), Some(ReplicaId(1)));
        assert_eq!(w.poll(me, &mut f, &layout, 3), Some(ReplicaId(2)));
        while f.advance().is_some() {}
        assert_eq!(
            f.bytes(ReplicaId(1), RegionKind::Background)[layout.ack_offset(me)],
            4
        );
    }

    #[test]
    fn worker_idle_on_empty_array() {
        let (mut f, layout) = fabric(3);
        assert_eq!(
            PermissionWorker::default().poll(ReplicaId(0), &mut f, &layout, 3),
            None
        );
    }

    #[test]
    fn election_picks_lowest_alive() {
        let (mut f, _) = fabric(3);
        let mut e = Election::new(ReplicaId(2), 3, P);
        assert_eq!(e.leader(), ReplicaId(0));
        let mut changed = None;
        for _ in 0..14 {
            changed = changed.or(e.on_read(&mut f, ReplicaId(0), None));
        }
        assert_eq!(changed, Some(ReplicaId(1)));
        for c in 1..=20 {
            e.on_read(&mut f, ReplicaId(0), Some(&(c as u64).to_le_bytes()));
        }
        assert_eq!(e.leader(), ReplicaId(0));
    }
}
