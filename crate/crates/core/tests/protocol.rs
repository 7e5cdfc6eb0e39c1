use std::collections::BTreeSet;

use permsmr::background::detection_bound;
use permsmr::checkers::{self, measure_round_complexity, run_all};
use permsmr::harness::{run_scenario, FaultAction, FaultSpec, OpSpec, Scenario, Simulation};
use permsmr::kv::Command;
use permsmr::trace::{EventKind, OpKind, Status, TraceEvent};
use permsmr::workload::{random_scenario, Profile};
use permsmr::{RegionKind, ReplicaId, Time};

fn puts(n: usize, start: Time, gap: Time) -> Vec<OpSpec> {
    (0..n)
        .map(|i| OpSpec {
            time: start + i as Time * gap,
            cmd: Command::Put {
                key: vec![b'k', (i % 7) as u8],
                value: format!("v{i}").into_bytes(),
            },
        })
        .collect()
}

fn fault(time: Time, action: FaultAction) -> FaultSpec {
    FaultSpec { time, action }
}

fn assert_safe(trace: &[TraceEvent], no_holes: bool) {
    for v in run_all(trace, no_holes) {
        assert!(v.pass, "{v:?}");
    }
}

fn suspicions(trace: &[TraceEvent], peer: ReplicaId) -> Vec<(Time, ReplicaId)> {
    trace
        .iter()
        .filter_map(|e| match e.kind {
            EventKind::Suspect { peer: p } if p == peer => Some((e.time, e.replica?)),
            _ => None,
        })
        .collect()
}

/// Replica 2's grant ack reaches the leader only after the grace period, so
/// it joins the confirmed set later through the grow step.
fn straggler(update_followers: bool) -> Scenario {
    Scenario {
        update_followers,
        faults: vec![fault(
            1,
            FaultAction::Delay {
                from: ReplicaId(2),
                to: ReplicaId(0),
                amount: 150,
                duration: Some(200),
            },
        )],
        ops: puts(40, 150, 8),
        horizon: 1_500,
        ..Scenario::default()
    }
}

#[test]
fn straggler_without_follower_update_leaves_a_hole() {
    let out = run_scenario(&straggler(false)).unwrap();
    let v = checkers::check_no_holes(&out.trace);
    assert!(!v.pass, "expected the straggler to hold a gap");
    assert!(v.witness.unwrap().detail.starts_with("2 holds index"));
}

#[test]
fn straggler_with_follower_update_is_hole_free() {
    let out = run_scenario(&straggler(true)).unwrap();
    assert_eq!(out.stats.ops_completed, 40);
    assert_safe(&out.trace, true);
    let kv = &out.replicas[0].kv;
    assert!(out.replicas.iter().all(|r| &r.kv == kv));
}

#[test]
fn long_leader_pause_deposes_once_and_stays_safe() {
    let sc = Scenario {
        faults: vec![fault(
            300,
            FaultAction::Pause {
                target: ReplicaId(0),
                duration: 120,
            },
        )],
        ops: puts(60, 150, 10),
        horizon: 2_500,
        ..Scenario::default()
    };
    let out = run_scenario(&sc).unwrap();
    let sus = suspicions(&out.trace, ReplicaId(0));
    // Each follower suspects the paused leader exactly once.
    assert_eq!(sus.len(), 2, "{sus:?}");
    // The first read after the pause still sees a fresh counter.
    let bound = detection_bound(sc.score.max, &sc.score, sc.t_scan) + sc.t_scan;
    for (t, _) in &sus {
        assert!(*t - 300 <= bound, "suspected at {t}");
    }
    let took_over = out.trace.iter().any(|e| {
        e.replica == Some(ReplicaId(1))
            && matches!(
                e.kind,
                EventKind::Role {
                    leader: ReplicaId(1)
                }
            )
    });
    assert!(took_over);
    assert_eq!(out.stats.ops_completed, 60);
    assert_safe(&out.trace, true);
}

#[test]
fn crash_is_detected_within_the_bound() {
    for seed in 0..50 {
        let crash = 301 + seed % 7;
        let sc = Scenario {
            seed,
            faults: vec![fault(crash, FaultAction::Crash(ReplicaId(0)))],
            horizon: 600,
            ..Scenario::default()
        };
        let out = run_scenario(&sc).unwrap();
        let sus = suspicions(&out.trace, ReplicaId(0));
        assert_eq!(sus.len(), 2);
        let bound = detection_bound(sc.score.max, &sc.score, sc.t_scan);
        for (t, _) in sus {
            assert!(t - crash <= bound, "seed {seed}: suspected at {t}");
        }
    }
}

#[test]
fn short_pause_goes_unnoticed() {
    let sc = Scenario {
        faults: vec![fault(
            300,
            FaultAction::Pause {
                target: ReplicaId(0),
                duration: 10,
            },
        )],
        ops: puts(30, 150, 10),
        ..Scenario::default()
    };
    let out = run_scenario(&sc).unwrap();
    assert!(suspicions(&out.trace, ReplicaId(0)).is_empty());
    assert_eq!(out.stats.ops_completed, 30);
}

#[test]
fn delay_spike_is_not_a_failure() {
    let sc = Scenario {
        faults: vec![fault(
            300,
            FaultAction::Delay {
                from: ReplicaId(1),
                to: ReplicaId(0),
                amount: 20,
                duration: Some(100),
            },
        )],
        ops: puts(30, 150, 10),
        ..Scenario::default()
    };
    let out = run_scenario(&sc).unwrap();
    assert!(out
        .trace
        .iter()
        .all(|e| !matches!(e.kind, EventKind::Suspect { .. })));
    assert_safe(&out.trace, true);
}

#[test]
fn crashed_peer_fails_reads_and_loses_its_score() {
    let sc = Scenario {
        faults: vec![fault(200, FaultAction::Crash(ReplicaId(2)))],
        horizon: 400,
        ..Scenario::default()
    };
    let mut sim = Simulation::new(sc).unwrap();
    while sim.now() < 199 && sim.schedule_step() {}
    assert_eq!(sim.score(ReplicaId(0), ReplicaId(2)), Some(15));
    while sim.schedule_step() {}
    assert_eq!(sim.score(ReplicaId(0), ReplicaId(2)), Some(0));
    assert_eq!(sim.score(ReplicaId(1), ReplicaId(2)), Some(0));
    let trace = sim.trace();
    let reads: BTreeSet<u64> = trace
        .iter()
        .filter_map(|e| match e.kind {
            EventKind::Post {
                req,
                op: OpKind::Read,
                target: ReplicaId(2),
                region: RegionKind::Background,
                ..
            } if e.time > 200 => Some(req),
            _ => None,
        })
        .collect();
    let failed_reads = trace
        .iter()
        .filter(|e| {
            matches!(e.kind, EventKind::Complete { req, status: Status::TargetCrashed }
                if reads.contains(&req))
        })
        .count();
    assert!(failed_reads > 10);
}

#[test]
fn eight_slot_log_wraps_safely() {
    let sc = Scenario {
        capacity: 8,
        ops: puts(60, 150, 6),
        horizon: 3_000,
        ..Scenario::default()
    };
    let out = run_scenario(&sc).unwrap();
    assert_eq!(out.stats.ops_completed, 60);
    assert!(out.replicas[0].fuo >= 3 * 8);
    assert!(out
        .trace
        .iter()
        .any(|e| matches!(e.kind, EventKind::ZeroWrite { .. })));
    assert_safe(&out.trace, true);
    let kv = &out.replicas[0].kv;
    assert!(out.replicas.iter().all(|r| &r.kv == kv));
}

#[test]
fn common_case_is_one_write_per_replica() {
    let sc = Scenario {
        ops: puts(1_000, 150, 3),
        horizon: 6_000,
        ..Scenario::default()
    };
    let out = run_scenario(&sc).unwrap();
    assert_eq!(out.stats.ops_completed, 1_000);
    let calls = measure_round_complexity(&out.trace);
    assert_eq!(calls.len(), 1_000);
    for c in &calls[1..] {
        assert_eq!((c.writes, c.reads), (3, 0), "{c:?}");
    }
}

#[test]
fn random_scenarios_replay_identically() {
    for seed in 0..5 {
        let sc = random_scenario(seed, Profile::Chaos);
        let a = run_scenario(&sc).unwrap().trace;
        let b = run_scenario(&sc).unwrap().trace;
        assert_eq!(a, b);
    }
}
