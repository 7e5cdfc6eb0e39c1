//! Repeated leader crashes measured in simulated time.

use std::fmt::Write as _;

use rayon::prelude::*;

use permsmr::checkers::failovers;
use permsmr::harness::{run_scenario, FaultAction, FaultSpec, OpSpec, Scenario};
use permsmr::kv::Command;
use permsmr::{ReplicaId, Time};

use crate::error::CliError;

/// Permission-change latency under which detection and the permission
/// switch split fail-over time roughly 70/30.
pub const FAST_L_PERM: Time = 1;

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub first_seed: u64,
    pub runs: u64,
    pub l_perm: Time,
    pub jobs: usize,
}

/// One crash of the initial leader.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Sample {
    pub seed: u64,
    pub crash: Time,
    /// Crash to the successor announcing itself leader.
    pub detection: Time,
    /// Announcement to the successor starting to propose with its
    /// permissions in hand.
    pub switch: Time,
    /// Crash to the successor's first decided value.
    pub total: Time,
}

pub fn bench_scenario(seed: u64, l_perm: Time) -> Scenario {
    let crash = 300 + (seed.wrapping_mul(37) % 40);
    let ops = (0..)
        .map(|i| 150 + 4 * i)
        .take_while(|&t| t < crash + 300)
        .enumerate()
        .map(|(i, time)| OpSpec {
            time,
            cmd: Command::Put {
                key: vec![b'k', (i % 5) as u8],
                value: format!("{i}").into_bytes(),
            },
        })
        .collect();
    Scenario {
        seed,
        l_perm,
        horizon: crash + 600,
        faults: vec![FaultSpec {
            time: crash,
            action: FaultAction::Crash(ReplicaId(0)),
        }],
        ops,
        ..Scenario::default()
    }
}

/// Analytic ceiling on fail-over time: suspicion after `max - 1` missed
/// scans plus one read, two permission changes, and `slack` for the
/// grace period and the takeover round trips.
pub fn bound(sc: &Scenario) -> Time {
    (sc.score.max as Time - 1) * sc.t_scan + sc.t_scan + 2 * sc.l_perm + slack(sc)
}

/// Grace period plus twelve worst-case replication latencies.
pub fn slack(sc: &Scenario) -> Time {
    sc.grace + 12 * (sc.repl.base + sc.repl.jitter)
}

pub fn measure(seed: u64, l_perm: Time) -> Result<Option<Sample>, CliError> {
    let sc = bench_scenario(seed, l_perm);
    let out = run_scenario(&sc)?;
    let f = failovers(&out.trace).into_iter().next();
    Ok(f.and_then(|f| {
        Some(Sample {
            seed,
            crash: f.crash,
            detection: f.detection()?,
            switch: f.switch()?,
            total: f.total()?,
        })
    }))
}

/// Samples in seed order; `None` marks a run whose fail-over never
/// completed.
pub fn run_bench(cfg: &BenchConfig) -> Result<Vec<(u64, Option<Sample>)>, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    pool.install(|| {
        (cfg.first_seed..cfg.first_seed + cfg.runs)
            .into_par_iter()
            .map(|seed| Ok((seed, measure(seed, cfg.l_perm)?)))
            .collect()
    })
}

/// `bucket_upper_tick count` rows; bucket `k` covers `((k-1)w, kw]`.
pub fn histogram(values: impl IntoIterator<Item = Time>, width: Time) -> Vec<(Time, usize)> {
    let mut counts = std::collections::BTreeMap::new();
    for v in values {
        let upper = v.div_ceil(width).max(1) * width;
        *counts.entry(upper).or_insert(0) += 1;
    }
    counts.into_iter().collect()
}

/// Mean share of fail-over time spent before the successor announced
/// itself, over detection plus switch.
pub fn detection_share(samples: &[Sample]) -> f64 {
    let det: Time = samples.iter().map(|s| s.detection).sum();
    let sw: Time = samples.iter().map(|s| s.switch).sum();
    if det + sw == 0 {
        return 0.0;
    }
    det as f64 / (det + sw) as f64
}

/// Histogram file: blocks for total, detection and switch times, each
/// headed by a comment and separated by a blank line.
pub fn histogram_text(samples: &[Sample], width: Time) -> String {
    let mut s = String::new();
    type Field = fn(&Sample) -> Time;
    let blocks: [(&str, Field); 3] = [
        ("total", |x| x.total),
        ("detection", |x| x.detection),
        ("switch", |x| x.switch),
    ];
    for (i, (name, get)) in blocks.into_iter().enumerate() {
        if i > 0 {
            s.push('\n');
        }
        let _ = writeln!(s, "# {name}");
        for (upper, count) in histogram(samples.iter().map(get), width) {
            let _ = writeln!(s, "{upper} {count}");
        }
    }
    s
}
