use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SCENARIO: &str = "\
# leader crash under load
n = 3
seed = 4
horizon = 1500
fault = 400,crash,0
op = 200,put,a,1
op = 240,put,b,1
op = 280,get,a
op = 320,put,a,2
op = 360,get,a
op = 400,put,b,2
op = 440,get,b
op = 480,put,a,3
op = 520,put,c,1
op = 560,get,c
";

fn permsmr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_permsmr"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

#[test]
fn run_writes_trace_and_stats_then_check_agrees() {
    let dir = tempfile::tempdir().unwrap();
    let sc = path(dir.path(), "s.txt");
    fs::write(&sc, SCENARIO).unwrap();
    let trace = path(dir.path(), "t.trace");
    let stats = path(dir.path(), "stats.txt");
    let o = permsmr(&[
        "run",
        "--scenario",
        &sc,
        "--trace",
        &trace,
        "--stats",
        &stats,
    ]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("run|seed=4|ops=10|completed=10|"), "{out}");
    assert_eq!(out.matches("|pass").count(), 5, "{out}");
    assert!(fs::read_to_string(&trace)
        .unwrap()
        .starts_with("0|-|setup|n=3|"));
    let st = fs::read_to_string(&stats).unwrap();
    assert!(st.contains("ops_completed = 10"));
    assert!(st.contains("replica.0 = crashed=true"));

    let o = permsmr(&["check", "--trace", &trace]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
}

#[test]
fn doctored_run_fails_its_checker() {
    let dir = tempfile::tempdir().unwrap();
    let sc = path(dir.path(), "s.txt");
    fs::write(&sc, SCENARIO).unwrap();
    let trace = path(dir.path(), "bad.trace");
    let o = permsmr(&[
        "run",
        "--scenario",
        &sc,
        "--doctor",
        "double-grant",
        "--trace",
        &trace,
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("verdict|check_exclusivity_solo|fail|time="));

    let o = permsmr(&["check", "--trace", &trace]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn seed_flag_overrides_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let sc = path(dir.path(), "s.txt");
    fs::write(&sc, SCENARIO).unwrap();
    let o = permsmr(&["run", "--scenario", &sc, "--seed", "99"]);
    assert!(stdout(&o).contains("run|seed=99|"));
}

#[test]
fn empty_trace_passes_with_a_warning() {
    let dir = tempfile::tempdir().unwrap();
    let trace = path(dir.path(), "empty.trace");
    fs::write(&trace, "").unwrap();
    let o = permsmr(&["check", "--trace", &trace]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("vacuously"));
}

#[test]
fn truncated_trace_is_a_usage_error_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let sc = path(dir.path(), "s.txt");
    fs::write(&sc, SCENARIO).unwrap();
    let trace = path(dir.path(), "t.trace");
    permsmr(&["run", "--scenario", &sc, "--trace", &trace]);
    let text = fs::read_to_string(&trace).unwrap();
    let cut = text.len() - 7;
    fs::write(&trace, &text[..cut]).unwrap();
    let lines = text[..cut].lines().count();
    let o = permsmr(&["check", "--trace", &trace]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(
        err.contains(&format!("line {lines}: truncated record at byte")),
        "{err}"
    );
}

#[test]
fn bad_inputs_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let sc = path(dir.path(), "s.txt");
    fs::write(&sc, "n = 3\nop = 10,delete,a\n").unwrap();
    let o = permsmr(&["run", "--scenario", &sc]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"));

    let o = permsmr(&["run", "--scenario", &path(dir.path(), "missing.txt")]);
    assert_eq!(o.status.code(), Some(2));

    assert_eq!(permsmr(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(permsmr(&["run"]).status.code(), Some(2));
    assert_eq!(permsmr(&["--help"]).status.code(), Some(0));

    fs::write(&sc, SCENARIO).unwrap();
    let o = permsmr(&["run", "--scenario", &sc, "--doctor", "nope"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn small_sweeps_pass() {
    let o = permsmr(&["sweep", "--seeds", "20", "--jobs", "4"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("sweep|seeds=20|failed=0|"));
    let o = permsmr(&[
        "sweep",
        "--seeds",
        "10",
        "--seed",
        "500",
        "--profile",
        "es",
        "--capacity",
        "8",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
}

#[test]
fn failover_bench_writes_histograms() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(dir.path(), "hist.txt");
    let o = permsmr(&["failover-bench", "--runs", "30", "--out", &out]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("failover|runs=30|completed=30|l_perm=50|bound=170|over_bound=0|"));
    let text = fs::read_to_string(&out).unwrap();
    let blocks: Vec<&str> = text.split("\n\n").collect();
    assert_eq!(blocks.len(), 3);
    for (block, name) in blocks.iter().zip(["total", "detection", "switch"]) {
        let mut lines = block.lines();
        assert_eq!(lines.next(), Some(format!("# {name}").as_str()));
        let total: usize = lines
            .map(|l| {
                let (upper, count) = l.split_once(' ').unwrap();
                assert_eq!(upper.parse::<u64>().unwrap() % 10, 0);
                count.parse::<usize>().unwrap()
            })
            .sum();
        assert_eq!(total, 30);
    }
}
