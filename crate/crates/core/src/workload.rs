//! Seeded random scenarios for sweeps.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::harness::{FaultAction, FaultSpec, OpSpec, Scenario};
use crate::kv::Command;
use crate::types::{ReplicaId, Time};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    /// Crashes of up to a minority, pauses long enough to depose a leader
    /// and bring it back as a duelling leader, and delay spikes.
    Chaos,
    /// Same fault mix, but every fault ends before a stabilization time
    /// and the workload keeps running well past it.
    EventuallySynchronous,
}

const KEYS: u8 = 6;
const OPS_START: Time = 100;

/// Builds a scenario from `seed` alone.
pub fn random_scenario(seed: u64, profile: Profile) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f5c);
    let n = if rng.gen_bool(0.5) { 3 } else { 5 };
    let op_count = rng.gen_range(50..=80);
    let mean_gap = rng.gen_range(4..=12);
    let mut ops = Vec::with_capacity(op_count);
    let mut t = OPS_START;
    for i in 0..op_count {
        t += rng.gen_range(1..=2 * mean_gap);
        let key = alloc::vec![b'k', rng.gen_range(0..KEYS)];
        let cmd = if rng.gen_bool(0.7) {
            Command::Put {
                key,
                value: format!("v{i}").into_bytes(),
            }
        } else {
            Command::Get { key }
        };
        ops.push(OpSpec { time: t, cmd });
    }
    let last_op = t;
    let fault_end = match profile {
        Profile::Chaos => last_op,
        Profile::EventuallySynchronous => OPS_START + (last_op - OPS_START) / 2,
    };

    let mut faults = Vec::new();
    let mut ids: Vec<u8> = (0..n as u8).collect();
    ids.shuffle(&mut rng);
    let crashes = rng.gen_range(0..=(n - 1) / 2);
    if rng.gen_bool(0.5) {
        // Favour the initial leader as a victim.
        let at = ids.iter().position(|&r| r == 0).expect("present");
        ids.swap(0, at);
    }
    for &r in &ids[..crashes] {
        faults.push(FaultSpec {
            time: rng.gen_range(OPS_START..fault_end),
            action: FaultAction::Crash(ReplicaId(r)),
        });
    }
    for _ in 0..rng.gen_range(0..=3) {
        let target = ReplicaId(rng.gen_range(0..n as u8));
        let start = rng.gen_range(OPS_START..fault_end);
        // Short pauses stay below the detection bound, long ones depose.
        let duration = if rng.gen_bool(0.5) {
            rng.gen_range(2..20)
        } else {
            rng.gen_range(40..200)
        };
        let duration = match profile {
            Profile::Chaos => duration,
            Profile::EventuallySynchronous => duration.min(fault_end - start).max(1),
        };
        faults.push(FaultSpec {
            time: start,
            action: FaultAction::Pause { target, duration },
        });
    }
    for _ in 0..rng.gen_range(0..=2) {
        let from = ReplicaId(rng.gen_range(0..n as u8));
        let to = ReplicaId(rng.gen_range(0..n as u8));
        let start = rng.gen_range(OPS_START..fault_end);
        let duration = rng.gen_range(10..100).min(fault_end - start).max(1);
        faults.push(FaultSpec {
            time: start,
            action: FaultAction::Delay {
                from,
                to,
                amount: rng.gen_range(5..40),
                duration: Some(duration),
            },
        });
    }
    faults.sort_by_key(|f| f.time);

    Scenario {
        n,
        seed,
        horizon: last_op + 2_000,
        torn_writes: rng.gen_bool(0.25),
        faults,
        ops,
        ..Scenario::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenarios_are_valid_and_seeded() {
        for seed in 0..200 {
            let sc = random_scenario(seed, Profile::Chaos);
            sc.validate().unwrap();
            assert!(sc.ops.len() >= 50);
            assert!(sc.n == 3 || sc.n == 5);
            let crashes = sc
                .faults
                .iter()
                .filter(|f| matches!(f.action, FaultAction::Crash(_)))
                .count();
            assert!(crashes <= (sc.n - 1) / 2);
            assert_eq!(sc, random_scenario(seed, Profile::Chaos));
        }
    }

    #[test]
    fn eventually_synchronous_faults_end_early() {
        for seed in 0..200 {
            let sc = random_scenario(seed, Profile::EventuallySynchronous);
            let last = sc.ops.last().unwrap().time;
            for f in &sc.faults {
                let end = match f.action {
                    FaultAction::Crash(_) => f.time,
                    FaultAction::Pause { duration, .. } => f.time + duration,
                    FaultAction::Delay { duration, .. } => f.time + duration.unwrap(),
                };
                assert!(end <= OPS_START + (last - OPS_START) / 2 + 1);
            }
        }
    }
}
