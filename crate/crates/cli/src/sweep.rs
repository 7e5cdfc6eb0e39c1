//! Parallel seed sweeps over random scenarios.

use rayon::prelude::*;

use permsmr::checkers::{run_all, Verdict};
use permsmr::harness::run_scenario;
use permsmr::workload::{random_scenario, Profile};

use crate::error::CliError;

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub first_seed: u64,
    pub seeds: u64,
    pub profile: Profile,
    /// Overrides the scenario's log capacity.
    pub capacity: Option<u64>,
    pub jobs: usize,
}

#[derive(Debug, Clone)]
pub struct SeedResult {
    pub seed: u64,
    pub n: usize,
    pub ops: usize,
    pub completed: usize,
    pub events: usize,
    pub failures: Vec<Verdict>,
}

impl SeedResult {
    pub fn all_completed(&self) -> bool {
        self.completed == self.ops
    }
}

fn one(seed: u64, cfg: &SweepConfig) -> Result<SeedResult, CliError> {
    let mut sc = random_scenario(seed, cfg.profile);
    if let Some(c) = cfg.capacity {
        sc.capacity = c;
    }
    let out = run_scenario(&sc)?;
    let failures = run_all(&out.trace, sc.update_followers)
        .into_iter()
        .filter(|v| !v.pass)
        .collect();
    Ok(SeedResult {
        seed,
        n: sc.n,
        ops: sc.ops.len(),
        completed: out.stats.ops_completed,
        events: out.trace.len(),
        failures,
    })
}

/// Runs every seed in isolation on a pool of `jobs` threads; results come
/// back in seed order.
pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<SeedResult>, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    pool.install(|| {
        (cfg.first_seed..cfg.first_seed + cfg.seeds)
            .into_par_iter()
            .map(|seed| one(seed, cfg))
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn results_are_in_seed_order_and_clean() {
        let cfg = SweepConfig {
            first_seed: 10,
            seeds: 6,
            profile: Profile::EventuallySynchronous,
            capacity: None,
            jobs: 3,
        };
        let res = run_sweep(&cfg).unwrap();
        let seeds: Vec<u64> = res.iter().map(|r| r.seed).collect();
        assert_eq!(seeds, (10..16).collect::<Vec<_>>());
        for r in &res {
            assert!(r.failures.is_empty(), "{r:?}");
            assert!(r.all_completed());
        }
    }
}
