//! Verdict records and run statistics.

use std::fmt::Write as _;

use permsmr::checkers::{measure_round_complexity, CallClass, Verdict};
use permsmr::harness::RunOutput;

/// `verdict|name|pass` or
/// `verdict|name|fail|time=..|position=..|detail=..`.
pub fn verdict_line(v: &Verdict) -> String {
    match (&v.witness, v.pass) {
        (_, true) => format!("verdict|{}|pass", v.name),
        (Some(w), false) => format!(
            "verdict|{}|fail|time={}|position={}|detail={}",
            v.name,
            w.time,
            w.position,
            w.detail.replace('|', "%7C")
        ),
        (None, false) => format!("verdict|{}|fail", v.name),
    }
}

/// `key = value` summary of a run.
pub fn stats_text(out: &RunOutput) -> String {
    let mut s = String::new();
    let st = &out.stats;
    let _ = writeln!(s, "ops_invoked = {}", st.ops_invoked);
    let _ = writeln!(s, "ops_completed = {}", st.ops_completed);
    let _ = writeln!(s, "end_time = {}", st.end_time);
    let _ = writeln!(s, "events = {}", st.events);

    let calls = measure_round_complexity(&out.trace);
    let decided: Vec<_> = calls.iter().filter(|c| c.index.is_some()).collect();
    let count = |class| decided.iter().filter(|c| c.class == class).count();
    let _ = writeln!(s, "propose_calls = {}", calls.len());
    let _ = writeln!(s, "propose_decided = {}", decided.len());
    let _ = writeln!(s, "propose_common = {}", count(CallClass::Common));
    let _ = writeln!(s, "propose_recovery = {}", count(CallClass::Recovery));
    let _ = writeln!(s, "propose_recycling = {}", count(CallClass::Recycling));
    if let Some(max) = decided.iter().map(|c| c.end - c.begin).max() {
        let total: u64 = decided.iter().map(|c| c.end - c.begin).sum();
        let mean = total as f64 / decided.len() as f64;
        let _ = writeln!(s, "propose_latency_mean = {mean:.2}");
        let _ = writeln!(s, "propose_latency_max = {max}");
    }
    for r in &out.replicas {
        let _ = writeln!(
            s,
            "replica.{} = crashed={} fuo={} log_head={} keys={}",
            r.id.0,
            r.crashed,
            r.fuo,
            r.log_head,
            r.kv.len()
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use permsmr::checkers::Witness;

    #[test]
    fn verdict_lines() {
        assert_eq!(
            verdict_line(&Verdict::pass("check_no_holes")),
            "verdict|check_no_holes|pass"
        );
        let v = Verdict {
            name: "check_no_holes",
            pass: false,
            witness: Some(Witness {
                time: 9,
                position: 40,
                detail: "2 holds index 4 but not 3".into(),
            }),
        };
        assert_eq!(
            verdict_line(&v),
            "verdict|check_no_holes|fail|time=9|position=40|detail=2 holds index 4 but not 3"
        );
    }
}
