//! Scenarios, replica wiring and the deterministic run loop.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::background::{BgLayout, Election, PermissionWorker, ScoreParams};
use crate::error::{Error, Result};
use crate::fabric::{DelayModel, Fabric, FabricConfig, FabricEvent, Liveness, PermAction};
use crate::kv::{self, Command, KvStore};
use crate::log::{read_u64, LogLayout, DEFAULT_VALUE_SIZE, FUO_OFFSET};
use crate::replication::{
    ClientRequest, Leader, ProtocolConfig, Replayer, TIMER_GRACE, TIMER_RECYCLE,
};
use crate::trace::{EventKind, FaultKind, TraceEvent};
use crate::types::{RegionKind, ReplicaId, Time};

const TIMER_SCAN: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultAction {
    Crash(ReplicaId),
    Pause {
        target: ReplicaId,
        duration: Time,
    },
    /// Extra latency on requests from `from` to `to`; `None` lasts forever.
    Delay {
        from: ReplicaId,
        to: ReplicaId,
        amount: Time,
        duration: Option<Time>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FaultSpec {
    pub time: Time,
    pub action: FaultAction,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpSpec {
    pub time: Time,
    pub cmd: Command,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scenario {
    pub n: usize,
    pub seed: u64,
    pub horizon: Time,
    pub t_hb: Time,
    pub t_scan: Time,
    pub l_perm: Time,
    pub t_conn: Time,
    pub repl: DelayModel,
    pub bg: DelayModel,
    pub capacity: u64,
    pub value_size: usize,
    pub torn_writes: bool,
    pub chunk: usize,
    pub omit_prepare: bool,
    pub update_followers: bool,
    pub recycling: bool,
    pub grace: Time,
    pub recycle_period: Time,
    pub client_timeout: Time,
    pub client_retry: Time,
    /// Closed-loop clients: op `i` belongs to client `i % clients` and is
    /// invoked no earlier than its time and after the client's previous op
    /// responded.
    pub clients: usize,
    pub score: ScoreParams,
    pub faults: Vec<FaultSpec>,
    pub ops: Vec<OpSpec>,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            n: 3,
            seed: 0,
            horizon: 2_000,
            t_hb: 1,
            t_scan: 2,
            l_perm: 50,
            t_conn: 2,
            repl: DelayModel { base: 1, jitter: 2 },
            bg: DelayModel { base: 1, jitter: 2 },
            capacity: 1024,
            value_size: DEFAULT_VALUE_SIZE,
            torn_writes: false,
            chunk: 8,
            omit_prepare: true,
            update_followers: true,
            recycling: true,
            grace: 4,
            recycle_period: 5,
            client_timeout: 300,
            client_retry: 10,
            clients: 4,
            score: ScoreParams::default(),
            faults: Vec::new(),
            ops: Vec::new(),
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.n == 0 || self.n > 64 {
            return bad("replica count must be in 1..=64");
        }
        if self.clients == 0 {
            return bad("at least one client is required");
        }
        if self.t_hb == 0 || self.t_scan == 0 {
            return bad("heartbeat and scan periods must be positive");
        }
        if self.capacity < 4 {
            return bad("log capacity must be at least 4 slots");
        }
        if self.torn_writes && self.chunk == 0 {
            return bad("chunk size must be positive in torn-write mode");
        }
        if self.score.fail_below > self.score.recover_above
            || self.score.recover_above > self.score.max
        {
            return bad("score thresholds must satisfy fail <= recover <= max");
        }
        LogLayout::new(self.capacity, self.value_size)?;
        for f in &self.faults {
            if f.time > self.horizon {
                return Err(Error::Config(format!(
                    "fault at {} is past the horizon {}",
                    f.time, self.horizon
                )));
            }
            let targets = match f.action {
                FaultAction::Crash(r) | FaultAction::Pause { target: r, .. } => [r, r],
                FaultAction::Delay { from, to, .. } => [from, to],
            };
            if let Some(r) = targets.iter().find(|r| r.index() >= self.n) {
                return Err(Error::UnknownReplica(*r));
            }
        }
        for (i, op) in self.ops.iter().enumerate() {
            if op.time > self.horizon {
                return Err(Error::Config(format!(
                    "op at {} is past the horizon {}",
                    op.time, self.horizon
                )));
            }
            kv::encode(i as u32, &op.cmd, self.value_size)?;
        }
        Ok(())
    }

    pub fn protocol(&self) -> ProtocolConfig {
        ProtocolConfig {
            n: self.n,
            log: LogLayout::new(self.capacity, self.value_size).expect("validated"),
            bg: BgLayout::new(self.n),
            omit_prepare: self.omit_prepare,
            update_followers: self.update_followers,
            recycling: self.recycling,
            grace: self.grace,
            recycle_period: self.recycle_period,
        }
    }

    pub fn fabric_config(&self) -> FabricConfig {
        FabricConfig {
            seed: self.seed,
            replication: self.repl,
            background: self.bg,
            loopback: 0,
            perm_latency: self.l_perm,
            conn_timeout: self.t_conn,
            torn_writes: self.torn_writes,
            chunk: self.chunk,
        }
    }
}

struct Replica {
    id: ReplicaId,
    election: Election,
    worker: PermissionWorker,
    leader: Leader,
    replayer: Replayer,
    kv: KvStore,
    scan_reqs: BTreeSet<u64>,
    deferred: Vec<FabricEvent>,
    was_active: bool,
}

#[derive(Debug, Clone)]
struct ClientOp {
    payload: Vec<u8>,
    attempt: u32,
    target: Option<ReplicaId>,
    invoked: bool,
    responded: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum HarnessEvent {
    Fault(usize),
    Resume(ReplicaId),
    SpikeEnd(ReplicaId, ReplicaId),
    Invoke(u64),
    Retry(u64),
    Timeout(u64, u32),
}

/// Final per-replica state at the horizon.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplicaState {
    pub id: ReplicaId,
    pub crashed: bool,
    pub fuo: u64,
    pub log_head: u64,
    pub kv: BTreeMap<Vec<u8>, Vec<u8>>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Stats {
    pub ops_invoked: usize,
    pub ops_completed: usize,
    pub end_time: Time,
    pub events: usize,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: Vec<TraceEvent>,
    pub stats: Stats,
    pub replicas: Vec<ReplicaState>,
}

pub struct Simulation {
    sc: Scenario,
    cfg: ProtocolConfig,
    fabric: Fabric,
    replicas: Vec<Replica>,
    clients: BTreeMap<u64, ClientOp>,
    /// Per client: the op in flight, and ops whose time came while busy.
    busy: Vec<Option<u64>>,
    backlog: Vec<VecDeque<u64>>,
    agenda: BTreeMap<(Time, u64), HarnessEvent>,
    agenda_seq: u64,
}

impl Simulation {
    pub fn new(sc: Scenario) -> Result<Self> {
        sc.validate()?;
        let cfg = sc.protocol();
        let mut fabric = Fabric::new(sc.fabric_config());
        let mut replicas = Vec::with_capacity(sc.n);
        for r in 0..sc.n {
            let id = ReplicaId(r as u8);
            fabric.register_region(id, RegionKind::Log, cfg.log.region_size())?;
            fabric.register_region(id, RegionKind::Background, cfg.bg.size())?;
            fabric.register_counter(
                id,
                RegionKind::Background,
                BgLayout::HEARTBEAT_OFFSET,
                sc.t_hb,
            )?;
            replicas.push(Replica {
                id,
                election: Election::new(id, sc.n, sc.score),
                worker: PermissionWorker::default(),
                leader: Leader::new(id, cfg.clone()),
                replayer: Replayer::default(),
                kv: KvStore::new(),
                scan_reqs: BTreeSet::new(),
                deferred: Vec::new(),
                was_active: false,
            });
        }
        fabric.emit_client(EventKind::Setup {
            n: sc.n as u8,
            capacity: sc.capacity,
            value_size: sc.value_size as u32,
        });
        let busy = vec![None; sc.clients];
        let backlog = vec![VecDeque::new(); sc.clients];
        let mut sim = Simulation {
            sc,
            cfg,
            fabric,
            replicas,
            clients: BTreeMap::new(),
            busy,
            backlog,
            agenda: BTreeMap::new(),
            agenda_seq: 0,
        };
        for i in 0..sim.sc.faults.len() {
            sim.at(sim.sc.faults[i].time, HarnessEvent::Fault(i));
        }
        for (i, op) in sim.sc.ops.iter().enumerate() {
            let payload = kv::encode(i as u32, &op.cmd, sim.sc.value_size)?;
            sim.clients.insert(
                i as u64,
                ClientOp {
                    payload,
                    attempt: 0,
                    target: None,
                    invoked: false,
                    responded: false,
                },
            );
        }
        for i in 0..sim.sc.ops.len() {
            sim.at(sim.sc.ops[i].time, HarnessEvent::Invoke(i as u64));
        }
        for r in 0..sim.sc.n {
            let id = ReplicaId(r as u8);
            sim.fabric.schedule_timer(id, 0, TIMER_SCAN);
            let leader = sim.replicas[r].election.is_leader();
            let rep = &mut sim.replicas[r];
            rep.leader.on_role(&mut sim.fabric, leader);
        }
        Ok(sim)
    }

    fn at(&mut self, time: Time, ev: HarnessEvent) {
        self.agenda.insert((time, self.agenda_seq), ev);
        self.agenda_seq += 1;
    }

    /// Processes the next event; `false` once the horizon is reached or
    /// nothing is left to do.
    pub fn schedule_step(&mut self) -> bool {
        let next_agenda = self.agenda.keys().next().map(|k| k.0);
        let next_fabric = self.fabric.peek_time();
        let agenda_first = match (next_agenda, next_fabric) {
            (None, None) => return false,
            (Some(a), Some(f)) => a <= f,
            (a, _) => a.is_some(),
        };
        let t = if agenda_first {
            next_agenda
        } else {
            next_fabric
        }
        .expect("some event");
        if t > self.sc.horizon {
            return false;
        }
        if agenda_first {
            let (key, ev) = self.agenda.pop_first().expect("non-empty");
            self.fabric.advance_to(key.0);
            self.on_harness(ev);
        } else if let Some(step) = self.fabric.advance() {
            self.on_fabric(step.event);
        }
        self.collect_bounced();
        true
    }

    pub fn now(&self) -> Time {
        self.fabric.now()
    }

    /// `observer`'s current score for `peer`.
    pub fn score(&self, observer: ReplicaId, peer: ReplicaId) -> Option<u8> {
        let r = self.replicas.get(observer.0 as usize)?;
        Some(r.election.entry(peer).score)
    }

    pub fn trace(&self) -> &[TraceEvent] {
        self.fabric.trace()
    }

    pub fn run(mut self) -> RunOutput {
        while self.schedule_step() {}
        self.finish()
    }

    fn finish(mut self) -> RunOutput {
        let replicas = self
            .replicas
            .iter()
            .map(|r| {
                let crashed = self.fabric.is_crashed(r.id);
                ReplicaState {
                    id: r.id,
                    crashed,
                    fuo: read_u64(self.fabric.bytes(r.id, RegionKind::Log), FUO_OFFSET),
                    log_head: r.replayer.log_head(),
                    kv: r.kv.entries().clone(),
                }
            })
            .collect();
        let trace = self.fabric.take_trace();
        let stats = Stats {
            ops_invoked: trace
                .iter()
                .filter(|e| matches!(e.kind, EventKind::Invoke { .. }))
                .count(),
            ops_completed: self.clients.values().filter(|c| c.responded).count(),
            end_time: self.fabric.now(),
            events: trace.len(),
        };
        RunOutput {
            trace,
            stats,
            replicas,
        }
    }

    fn on_harness(&mut self, ev: HarnessEvent) {
        match ev {
            HarnessEvent::Fault(i) => self.inject_fault(self.sc.faults[i].action),
            HarnessEvent::Resume(r) => {
                if self.fabric.liveness(r) == Liveness::Paused {
                    self.fabric.emit(
                        r,
                        EventKind::Fault {
                            fault: FaultKind::Resume,
                        },
                    );
                    self.fabric.resume(r);
                    let deferred = core::mem::take(&mut self.replicas[r.index()].deferred);
                    for ev in deferred {
                        self.on_fabric(ev);
                    }
                    self.wake(r);
                }
            }
            HarnessEvent::SpikeEnd(from, to) => self.fabric.set_delay_spike(from, to, 0),
            HarnessEvent::Invoke(op) => {
                let c = op as usize % self.sc.clients;
                if self.busy[c].is_some() {
                    self.backlog[c].push_back(op);
                    return;
                }
                self.busy[c] = Some(op);
                let client = self.clients.get_mut(&op).expect("scheduled op");
                client.invoked = true;
                let payload = client.payload.clone();
                self.fabric.emit_client(EventKind::Invoke { op, payload });
                self.route(op);
            }
            HarnessEvent::Retry(op) => self.route(op),
            HarnessEvent::Timeout(op, attempt) => {
                if self
                    .clients
                    .get(&op)
                    .is_some_and(|c| !c.responded && c.attempt == attempt)
                {
                    self.route(op);
                }
            }
        }
    }

    pub fn inject_fault(&mut self, action: FaultAction) {
        match action {
            FaultAction::Crash(r) => {
                if !self.fabric.is_crashed(r) {
                    self.fabric.emit(
                        r,
                        EventKind::Fault {
                            fault: FaultKind::Crash,
                        },
                    );
                    self.fabric.crash(r);
                    self.replicas[r.index()].deferred.clear();
                }
            }
            FaultAction::Pause { target, duration } => {
                if self.fabric.liveness(target) == Liveness::Alive {
                    self.fabric.emit(
                        target,
                        EventKind::Fault {
                            fault: FaultKind::Pause { duration },
                        },
                    );
                    self.fabric.pause(target);
                    let now = self.fabric.now();
                    self.at(now + duration, HarnessEvent::Resume(target));
                }
            }
            FaultAction::Delay {
                from,
                to,
                amount,
                duration,
            } => {
                if self.fabric.is_crashed(from) {
                    return;
                }
                let d = duration.unwrap_or(Time::MAX);
                self.fabric.emit(
                    from,
                    EventKind::Fault {
                        fault: FaultKind::DelaySpike {
                            to,
                            amount,
                            duration: d,
                        },
                    },
                );
                self.fabric.set_delay_spike(from, to, amount);
                if let Some(d) = duration {
                    let now = self.fabric.now();
                    self.at(now + d, HarnessEvent::SpikeEnd(from, to));
                }
            }
        }
    }

    /// Sends a client operation to the lowest-id running replica that
    /// believes itself leader, or retries later.
    fn route(&mut self, op: u64) {
        let Some(client) = self.clients.get_mut(&op) else {
            return;
        };
        if client.responded {
            return;
        }
        let now = self.fabric.now();
        let target = self.replicas.iter().find(|r| {
            self.fabric.liveness(r.id) == Liveness::Alive
                && r.election.is_leader()
                && r.leader.is_active_leader()
        });
        match target.map(|r| r.id) {
            Some(id) => {
                client.attempt += 1;
                client.target = Some(id);
                let attempt = client.attempt;
                let req = ClientRequest {
                    op,
                    payload: client.payload.clone(),
                };
                self.replicas[id.index()]
                    .leader
                    .enqueue(&mut self.fabric, req);
                self.at(
                    now + self.sc.client_timeout,
                    HarnessEvent::Timeout(op, attempt),
                );
                self.after_replica_step(id);
            }
            None => self.at(now + self.sc.client_retry, HarnessEvent::Retry(op)),
        }
    }

    fn collect_bounced(&mut self) {
        let now = self.fabric.now();
        for r in 0..self.replicas.len() {
            for req in self.replicas[r].leader.take_bounced() {
                self.at(now + self.sc.client_retry, HarnessEvent::Retry(req.op));
            }
        }
    }

    fn on_fabric(&mut self, ev: FabricEvent) {
        let owner = match &ev {
            FabricEvent::Delivered { target, .. } | FabricEvent::ChunkApplied { target, .. } => {
                *target
            }
            FabricEvent::Completion { issuer, .. } => *issuer,
            FabricEvent::Permission { target, .. } => *target,
            FabricEvent::Timer { replica, .. } => *replica,
        };
        match self.fabric.liveness(owner) {
            Liveness::Crashed => return,
            Liveness::Paused => {
                // Memory stays live; the CPU catches up on resume.
                if !matches!(ev, FabricEvent::ChunkApplied { .. }) {
                    self.replicas[owner.index()].deferred.push(ev);
                }
                return;
            }
            Liveness::Alive => {}
        }
        match ev {
            FabricEvent::Delivered {
                op: crate::trace::OpKind::Write,
                status: crate::trace::Status::Ok,
                target,
                ..
            } => self.wake(target),
            FabricEvent::Delivered { .. } | FabricEvent::ChunkApplied { .. } => {}
            FabricEvent::Completion { issuer, .. } => self.on_completions(issuer),
            FabricEvent::Permission {
                target,
                action: PermAction::Grant(q),
                ok: true,
            } => {
                let bg = self.cfg.bg;
                let rep = &mut self.replicas[target.index()];
                rep.worker.on_granted(target, q, &mut self.fabric, &bg);
                self.poll_worker(target);
            }
            FabricEvent::Permission { .. } => {}
            FabricEvent::Timer { replica, token } => self.on_timer(replica, token),
        }
    }

    fn on_timer(&mut self, r: ReplicaId, token: u64) {
        match token {
            TIMER_SCAN => {
                let now = self.fabric.now();
                let rep = &mut self.replicas[r.index()];
                for (req, _) in rep.election.scan(&mut self.fabric) {
                    rep.scan_reqs.insert(req);
                }
                self.fabric
                    .schedule_timer(r, now + self.sc.t_scan, TIMER_SCAN);
            }
            TIMER_GRACE | TIMER_RECYCLE => {
                self.replicas[r.index()]
                    .leader
                    .on_timer(&mut self.fabric, token);
                self.after_replica_step(r);
            }
            _ => {}
        }
    }

    fn on_completions(&mut self, r: ReplicaId) {
        for wc in self.fabric.poll_completions(r) {
            let rep = &mut self.replicas[r.index()];
            if rep.scan_reqs.remove(&wc.req) {
                let data = (wc.status == crate::trace::Status::Ok).then_some(wc.data.as_slice());
                if let Some(leader) = rep.election.on_read(&mut self.fabric, wc.target, data) {
                    rep.leader.on_role(&mut self.fabric, leader == r);
                }
            } else if rep.leader.owns(wc.req) {
                rep.leader.on_completion(&mut self.fabric, &wc);
            }
        }
        self.after_replica_step(r);
    }

    /// Something was written into `r`'s memory.
    fn wake(&mut self, r: ReplicaId) {
        self.poll_worker(r);
        self.replicas[r.index()].leader.on_wake(&mut self.fabric);
        self.after_replica_step(r);
    }

    fn poll_worker(&mut self, r: ReplicaId) {
        let bg = self.cfg.bg;
        let n = self.cfg.n;
        self.replicas[r.index()]
            .worker
            .poll(r, &mut self.fabric, &bg, n);
    }

    /// Runs the replayer and answers clients for entries a self-believed
    /// leader applied.
    fn after_replica_step(&mut self, r: ReplicaId) {
        let rep = &mut self.replicas[r.index()];
        let active = rep.leader.is_active_leader();
        if active != rep.was_active {
            rep.was_active = active;
            if active {
                // Clients learn of the new leader and resend what is
                // outstanding elsewhere.
                let moved: Vec<u64> = self
                    .clients
                    .iter()
                    .filter(|(_, c)| c.invoked && !c.responded && c.target.is_some_and(|t| t != r))
                    .map(|(&op, _)| op)
                    .collect();
                for op in moved {
                    self.route(op);
                }
            }
        }
        let rep = &mut self.replicas[r.index()];
        let follower = !rep.leader.is_active_leader();
        let applied = rep
            .replayer
            .step(r, &mut self.fabric, &self.cfg, follower, &mut rep.kv);
        if applied.is_empty() || !rep.election.is_leader() {
            return;
        }
        for a in applied {
            let Some(op) = a.op.map(u64::from) else {
                continue;
            };
            if let Some(client) = self.clients.get_mut(&op) {
                if !client.responded {
                    client.responded = true;
                    self.fabric.emit_client(EventKind::Respond {
                        op,
                        result: a.response,
                    });
                    let c = op as usize % self.sc.clients;
                    self.busy[c] = None;
                    if let Some(next) = self.backlog[c].pop_front() {
                        let now = self.fabric.now();
                        self.at(now, HarnessEvent::Invoke(next));
                    }
                }
            }
        }
    }
}

/// Runs a scenario to its horizon.
pub fn run_scenario(sc: &Scenario) -> Result<RunOutput> {
    Ok(Simulation::new(sc.clone())?.run())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn puts(n: usize, gap: Time) -> Vec<OpSpec> {
        (0..n)
            .map(|i| OpSpec {
                time: 200 + i as Time * gap,
                cmd: Command::Put {
                    key: vec![b'k', (i % 5) as u8],
                    value: format!("{i}").into_bytes(),
                },
            })
            .collect()
    }

    #[test]
    fn fault_free_run_commits_everything() {
        let sc = Scenario {
            ops: puts(100, 5),
            horizon: 2_000,
            ..Scenario::default()
        };
        let out = run_scenario(&sc).unwrap();
        assert_eq!(out.stats.ops_completed, 100);
        let first = &out.replicas[0];
        for r in &out.replicas {
            assert_eq!(r.kv, first.kv);
            assert_eq!(r.fuo, first.fuo);
        }
        assert!(first.fuo >= 100);
    }

    #[test]
    fn same_seed_same_trace() {
        let sc = Scenario {
            ops: puts(30, 7),
            seed: 11,
            faults: vec![FaultSpec {
                time: 300,
                action: FaultAction::Crash(ReplicaId(0)),
            }],
            horizon: 1_500,
            ..Scenario::default()
        };
        let a = run_scenario(&sc).unwrap().trace;
        let b = run_scenario(&sc).unwrap().trace;
        assert_eq!(a, b);
    }

    #[test]
    fn leader_crash_fails_over() {
        let sc = Scenario {
            ops: puts(40, 20),
            faults: vec![FaultSpec {
                time: 400,
                action: FaultAction::Crash(ReplicaId(0)),
            }],
            horizon: 3_000,
            ..Scenario::default()
        };
        let out = run_scenario(&sc).unwrap();
        assert_eq!(out.stats.ops_completed, 40);
        assert_eq!(out.replicas[1].kv, out.replicas[2].kv);
    }

    #[test]
    fn unknown_fault_target_rejected() {
        let sc = Scenario {
            faults: vec![FaultSpec {
                time: 1,
                action: FaultAction::Crash(ReplicaId(7)),
            }],
            ..Scenario::default()
        };
        assert_eq!(
            run_scenario(&sc).unwrap_err(),
            Error::UnknownReplica(ReplicaId(7))
        );
    }

    #[test]
    fn crashed_replica_is_silent_afterwards() {
        let sc = Scenario {
            ops: puts(20, 10),
            faults: vec![FaultSpec {
                time: 250,
                action: FaultAction::Crash(ReplicaId(1)),
            }],
            ..Scenario::default()
        };
        let out = run_scenario(&sc).unwrap();
        let crash = out
            .trace
            .iter()
            .position(|e| {
                matches!(
                    e.kind,
                    EventKind::Fault {
                        fault: FaultKind::Crash
                    }
                )
            })
            .unwrap();
        assert!(out.trace[crash + 1..]
            .iter()
            .all(|e| e.replica != Some(ReplicaId(1))));
    }
}
