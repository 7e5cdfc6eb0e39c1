use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use permsmr::checkers::run_all;
use permsmr::doctor::{doctor, Fixture};
use permsmr::harness::run_scenario;
use permsmr::workload::Profile;
use permsmr::Time;
use permsmr_cli::failover::{self, BenchConfig, FAST_L_PERM};
use permsmr_cli::report::{stats_text, verdict_line};
use permsmr_cli::scenario_file::ScenarioFile;
use permsmr_cli::sweep::{run_sweep, SweepConfig};
use permsmr_cli::trace_text::{read_trace, write_trace};
use permsmr_cli::CliError;

#[derive(Parser)]
#[command(
    name = "permsmr",
    version,
    about = "Simulated permission-based replication"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    Chaos,
    Es,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario file and check its trace.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Overrides the file's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        stats: Option<PathBuf>,
        /// Rewrite the trace with a negative-control fixture before checking.
        #[arg(long)]
        doctor: Option<String>,
    },
    /// Check many random scenarios in parallel.
    Sweep {
        #[arg(long, default_value_t = 1000)]
        seeds: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = ProfileArg::Chaos)]
        profile: ProfileArg,
        #[arg(long)]
        capacity: Option<u64>,
        #[arg(long, default_value_t = default_jobs())]
        jobs: usize,
    },
    /// Crash the leader repeatedly and histogram fail-over times.
    FailoverBench {
        #[arg(long, default_value_t = 1000)]
        runs: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 50, conflicts_with = "fast")]
        l_perm: Time,
        /// Use the fast permission-change preset.
        #[arg(long)]
        fast: bool,
        #[arg(long, default_value_t = 10)]
        bucket: Time,
        #[arg(long, default_value_t = default_jobs())]
        jobs: usize,
    },
    /// Re-check a saved trace.
    Check {
        #[arg(long)]
        trace: PathBuf,
        /// Skip the no-holes checker (runs without follower updates).
        #[arg(long)]
        allow_holes: bool,
    },
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn write_file(
    path: &Path,
    f: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>,
) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| CliError::io(path, e))
}

fn print_verdicts(verdicts: &[permsmr::checkers::Verdict]) -> bool {
    let mut ok = true;
    for v in verdicts {
        println!("{}", verdict_line(v));
        ok &= v.pass;
    }
    ok
}

fn run(
    scenario: &Path,
    seed: Option<u64>,
    trace: Option<&Path>,
    stats: Option<&Path>,
    fixture: Option<&str>,
) -> Result<bool, CliError> {
    let text = fs::read_to_string(scenario).map_err(|e| CliError::io(scenario, e))?;
    let file: ScenarioFile = text.parse().map_err(|source| CliError::Parse {
        path: scenario.into(),
        source,
    })?;
    let fixture = match fixture {
        Some(name) => Some(
            Fixture::parse(name)
                .ok_or_else(|| CliError::Usage(format!("unknown doctor fixture {name:?}")))?,
        ),
        None => file.doctor,
    };
    let mut sc = file.scenario;
    if let Some(s) = seed {
        sc.seed = s;
    }
    let mut out = run_scenario(&sc)?;
    if let Some(f) = fixture {
        out.trace = doctor(&out.trace, f).ok_or_else(|| {
            CliError::Usage(format!(
                "fixture {} needs events this run does not have",
                f.as_str()
            ))
        })?;
    }
    if let Some(p) = trace {
        write_file(p, |w| write_trace(w, &out.trace))?;
    }
    if let Some(p) = stats {
        write_file(p, |w| w.write_all(stats_text(&out).as_bytes()))?;
    }
    println!(
        "run|seed={}|ops={}|completed={}|events={}",
        sc.seed,
        out.stats.ops_invoked,
        out.stats.ops_completed,
        out.trace.len()
    );
    Ok(print_verdicts(&run_all(&out.trace, sc.update_followers)))
}

fn sweep(cfg: SweepConfig) -> Result<bool, CliError> {
    let started = std::time::Instant::now();
    let results = run_sweep(&cfg)?;
    let mut failed = 0;
    let mut incomplete = 0;
    for r in &results {
        for v in &r.failures {
            println!("seed {} {}", r.seed, verdict_line(v));
        }
        failed += usize::from(!r.failures.is_empty());
        if !r.all_completed() {
            incomplete += 1;
            if cfg.profile == Profile::EventuallySynchronous {
                println!("seed {} incomplete {}/{}", r.seed, r.completed, r.ops);
            }
        }
    }
    println!(
        "sweep|seeds={}|failed={failed}|incomplete={incomplete}|seconds={:.1}",
        results.len(),
        started.elapsed().as_secs_f64()
    );
    let terminated = cfg.profile != Profile::EventuallySynchronous || incomplete == 0;
    Ok(failed == 0 && terminated)
}

fn bench(cfg: BenchConfig, out: &Path, bucket: Time) -> Result<bool, CliError> {
    let results = failover::run_bench(&cfg)?;
    let samples: Vec<_> = results.iter().filter_map(|(_, s)| *s).collect();
    for (seed, s) in &results {
        if s.is_none() {
            println!("seed {seed} fail-over did not complete");
        }
    }
    write_file(out, |w| {
        w.write_all(failover::histogram_text(&samples, bucket).as_bytes())
    })?;
    let bound = failover::bound(&failover::bench_scenario(0, cfg.l_perm));
    let over = samples.iter().filter(|s| s.total > bound).count();
    let max = |f: fn(&failover::Sample) -> Time| samples.iter().map(f).max().unwrap_or(0);
    println!(
        "failover|runs={}|completed={}|l_perm={}|bound={bound}|over_bound={over}|max_total={}|max_detection={}|max_switch={}|detection_share={:.3}",
        results.len(),
        samples.len(),
        cfg.l_perm,
        max(|s| s.total),
        max(|s| s.detection),
        max(|s| s.switch),
        failover::detection_share(&samples),
    );
    Ok(samples.len() == results.len() && over == 0)
}

fn check(path: &Path, allow_holes: bool) -> Result<bool, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let trace = read_trace(BufReader::new(file))
        .map_err(|e| CliError::io(path, e))?
        .map_err(|source| CliError::Parse {
            path: path.into(),
            source,
        })?;
    if trace.is_empty() {
        eprintln!(
            "warning: {} is empty; every check passes vacuously",
            path.display()
        );
    }
    Ok(print_verdicts(&run_all(&trace, !allow_holes)))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(2),
            };
        }
    };
    let res = match cli.command {
        Cmd::Run {
            scenario,
            seed,
            trace,
            stats,
            doctor,
        } => run(
            &scenario,
            seed,
            trace.as_deref(),
            stats.as_deref(),
            doctor.as_deref(),
        ),
        Cmd::Sweep {
            seeds,
            seed,
            profile,
            capacity,
            jobs,
        } => sweep(SweepConfig {
            first_seed: seed,
            seeds,
            profile: match profile {
                ProfileArg::Chaos => Profile::Chaos,
                ProfileArg::Es => Profile::EventuallySynchronous,
            },
            capacity,
            jobs: jobs.max(1),
        }),
        Cmd::FailoverBench {
            runs,
            seed,
            out,
            l_perm,
            fast,
            bucket,
            jobs,
        } => bench(
            BenchConfig {
                first_seed: seed,
                runs,
                l_perm: if fast { FAST_L_PERM } else { l_perm },
                jobs: jobs.max(1),
            },
            &out,
            bucket.max(1),
        ),
        Cmd::Check { trace, allow_holes } => check(&trace, allow_holes),
    };
    match res {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
