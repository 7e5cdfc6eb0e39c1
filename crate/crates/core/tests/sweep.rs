use permsmr::checkers::run_all;
use permsmr::harness::run_scenario;
use permsmr::workload::{random_scenario, Profile};

fn sweep(seeds: u64, capacity: u64, profile: Profile) {
    for seed in 0..seeds {
        let mut sc = random_scenario(seed, profile);
        sc.capacity = capacity;
        let out = run_scenario(&sc).unwrap();
        for v in run_all(&out.trace, true) {
            assert!(v.pass, "seed {seed}: {v:?}");
        }
        // Replicas that executed the same prefix hold the same store.
        let live: Vec<_> = out.replicas.iter().filter(|r| !r.crashed).collect();
        for a in &live {
            for b in &live {
                if a.log_head == b.log_head {
                    assert_eq!(a.kv, b.kv, "seed {seed}");
                }
            }
        }
        if profile == Profile::EventuallySynchronous {
            assert_eq!(out.stats.ops_completed, sc.ops.len(), "seed {seed}");
        }
    }
}

#[test]
fn chaos_default_log() {
    sweep(150, 1024, Profile::Chaos);
}

#[test]
fn chaos_eight_slot_log() {
    sweep(150, 8, Profile::Chaos);
}

#[test]
fn eventually_synchronous_small_logs() {
    sweep(100, 8, Profile::EventuallySynchronous);
    sweep(100, 16, Profile::EventuallySynchronous);
}

#[test]
#[ignore = "long; run with --ignored"]
fn wide() {
    for cap in [8, 16, 1024] {
        sweep(1000, cap, Profile::Chaos);
        sweep(1000, cap, Profile::EventuallySynchronous);
    }
}
