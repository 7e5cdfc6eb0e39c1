//! One line per acceptance criterion; exits non-zero if any fails.

use std::process::ExitCode;
use std::time::Instant;

use sha2::{Digest, Sha256};

use permsmr::checkers::{self, measure_round_complexity, run_all};
use permsmr::doctor::{self, Fixture};
use permsmr::harness::{run_scenario, FaultAction, FaultSpec, OpSpec, Scenario};
use permsmr::kv::Command;
use permsmr::trace::EventKind;
use permsmr::workload::{random_scenario, Profile};
use permsmr::{ReplicaId, Time};
use permsmr_cli::failover::{self, BenchConfig, FAST_L_PERM};
use permsmr_cli::sweep::{run_sweep, SeedResult, SweepConfig};
use permsmr_cli::trace_text::write_trace;

const SWEEP_SEEDS: u64 = 1_000;
const BENCH_RUNS: u64 = 1_000;

fn jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

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

fn failing(results: &[SeedResult], name: &str) -> Vec<u64> {
    results
        .iter()
        .filter(|r| r.failures.iter().any(|v| v.name == name))
        .map(|r| r.seed)
        .collect()
}

fn fixture_fails(f: Fixture) -> bool {
    let trace = doctor::doctor(&doctor::base_trace(), f).expect("fixture applies");
    run_all(&trace, true)
        .iter()
        .any(|v| v.name == f.target() && !v.pass)
}

struct Report {
    all_pass: bool,
}

impl Report {
    fn line(&mut self, n: u8, pass: bool, what: &str, detail: String) {
        let tag = if pass { "PASS" } else { "FAIL" };
        println!("criterion {n} {tag} {what}: {detail}");
        self.all_pass &= pass;
    }
}

fn main() -> ExitCode {
    let mut report = Report { all_pass: true };

    let started = Instant::now();
    let sweep = run_sweep(&SweepConfig {
        first_seed: 0,
        seeds: SWEEP_SEEDS,
        profile: Profile::Chaos,
        capacity: None,
        jobs: jobs(),
    })
    .expect("sweep scenarios are valid");
    let secs = started.elapsed().as_secs_f64();
    let min_ops = sweep.iter().map(|r| r.ops).min().unwrap_or(0);
    let fives = sweep.iter().filter(|r| r.n == 5).count();

    // 1
    let agree = failing(&sweep, checkers::AGREEMENT_VALIDITY);
    let decided = failing(&sweep, checkers::DECIDED_COMMITTED);
    report.line(
        1,
        agree.is_empty() && decided.is_empty() && secs < 300.0 && min_ops >= 50,
        "agreement/validity sweep",
        format!(
            "{} scenarios ({fives} with n=5, min {min_ops} ops), agreement failures {:?}, decided failures {:?}, {secs:.1}s",
            sweep.len(),
            agree,
            decided
        ),
    );

    // 2
    let excl = failing(&sweep, checkers::EXCLUSIVITY_SOLO);
    let fixtures: Vec<(Fixture, bool)> = doctor::ALL
        .into_iter()
        .map(|f| (f, fixture_fails(f)))
        .collect();
    let missed: Vec<&str> = fixtures
        .iter()
        .filter(|(_, fails)| !fails)
        .map(|(f, _)| f.as_str())
        .collect();
    report.line(
        2,
        excl.is_empty() && missed.is_empty(),
        "exclusivity audit and negative controls",
        format!(
            "exclusivity failures {excl:?}, {} of {} fixtures fail their checker",
            fixtures.len() - missed.len(),
            fixtures.len()
        ),
    );

    // 3
    let sc = Scenario {
        ops: puts(1_000, 150, 3),
        horizon: 6_000,
        ..Scenario::default()
    };
    let out = run_scenario(&sc).expect("valid scenario");
    let calls = measure_round_complexity(&out.trace);
    let off: Vec<_> = calls
        .iter()
        .skip(1)
        .filter(|c| (c.writes, c.reads) != (3, 0))
        .collect();
    report.line(
        3,
        calls.len() == 1_000 && off.is_empty(),
        "common-case round complexity",
        format!(
            "{} proposes, {} after the first differ from (3 writes, 0 reads)",
            calls.len(),
            off.len()
        ),
    );

    // 4
    let holes = failing(&sweep, checkers::NO_HOLES);
    let straggler = Scenario {
        update_followers: false,
        faults: vec![FaultSpec {
            time: 1,
            action: FaultAction::Delay {
                from: ReplicaId(2),
                to: ReplicaId(0),
                amount: 150,
                duration: Some(200),
            },
        }],
        ops: puts(40, 150, 8),
        horizon: 1_500,
        ..Scenario::default()
    };
    let v = checkers::check_no_holes(&run_scenario(&straggler).expect("valid").trace);
    let gap = v.witness.map(|w| w.detail).unwrap_or_default();
    report.line(
        4,
        holes.is_empty() && !v.pass,
        "no holes",
        format!(
            "sweep failures {holes:?}, straggler without follower update (expected fail): {gap}"
        ),
    );

    // 5
    let bench = |l_perm| {
        let res = failover::run_bench(&BenchConfig {
            first_seed: 0,
            runs: BENCH_RUNS,
            l_perm,
            jobs: jobs(),
        })
        .expect("bench scenarios are valid");
        let samples: Vec<_> = res.iter().filter_map(|(_, s)| *s).collect();
        (samples, res.len())
    };
    let sc = failover::bench_scenario(0, 50);
    let bound = failover::bound(&sc);
    let (samples, runs) = bench(50);
    let over = samples.iter().filter(|s| s.total > bound).count();
    let max_det = samples.iter().map(|s| s.detection).max().unwrap_or(0);
    let (fast, _) = bench(FAST_L_PERM);
    let share = failover::detection_share(&fast);
    report.line(
        5,
        samples.len() == runs && over == 0 && max_det <= 30 && (0.6..=0.8).contains(&share),
        "fail-over bound",
        format!(
            "{}/{runs} fail-overs measured, {over} over {bound} ticks (slack {}), max detection {max_det}, detection share {:.1}% at L_perm={FAST_L_PERM}",
            samples.len(),
            failover::slack(&sc),
            share * 100.0
        ),
    );

    // 6
    let es = run_sweep(&SweepConfig {
        first_seed: 0,
        seeds: 200,
        profile: Profile::EventuallySynchronous,
        capacity: None,
        jobs: jobs(),
    })
    .expect("valid");
    let stuck: Vec<u64> = es
        .iter()
        .filter(|r| !r.all_completed())
        .map(|r| r.seed)
        .collect();
    report.line(
        6,
        stuck.is_empty(),
        "termination under eventual synchrony",
        format!("{} seeds, incomplete {stuck:?}", es.len()),
    );

    // 7
    let lin = failing(&sweep, checkers::LINEARIZABILITY);
    let stale = fixture_fails(Fixture::StaleRead);
    report.line(
        7,
        lin.is_empty() && stale,
        "linearizability",
        format!("sweep failures {lin:?}, stale-read fixture fails: {stale}"),
    );

    // 8
    let sc = Scenario {
        capacity: 8,
        faults: vec![FaultSpec {
            time: 400,
            action: FaultAction::Crash(ReplicaId(2)),
        }],
        ops: puts(120, 150, 6),
        horizon: 4_000,
        ..Scenario::default()
    };
    let out = run_scenario(&sc).expect("valid");
    let wraps = out.replicas.iter().map(|r| r.log_head).max().unwrap_or(0) / 8;
    let zeroed = out
        .trace
        .iter()
        .any(|e| matches!(e.kind, EventKind::ZeroWrite { .. }));
    let unsafe_: Vec<_> = run_all(&out.trace, true)
        .into_iter()
        .filter(|v| !v.pass)
        .map(|v| v.name)
        .collect();
    let live: Vec<_> = out.replicas.iter().filter(|r| !r.crashed).collect();
    let same = live.windows(2).all(|w| w[0].kv == w[1].kv);
    report.line(
        8,
        out.stats.ops_completed == 120 && wraps >= 3 && zeroed && unsafe_.is_empty() && same,
        "recycling",
        format!(
            "8-slot log, {wraps} wraps, failed checks {unsafe_:?}, {} live replicas with identical KV: {same}",
            live.len()
        ),
    );

    // 9
    let digest = |seed| {
        let trace = run_scenario(&random_scenario(seed, Profile::Chaos))
            .expect("valid")
            .trace;
        let mut bytes = Vec::new();
        write_trace(&mut bytes, &trace).expect("in-memory write");
        Sha256::digest(&bytes)
    };
    let differ: Vec<u64> = (0..20).filter(|&s| digest(s) != digest(s)).collect();
    report.line(
        9,
        differ.is_empty(),
        "determinism",
        format!("20 scenarios re-run, trace hashes differ for {differ:?}"),
    );

    if report.all_pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
