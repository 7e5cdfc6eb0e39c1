//! Line-oriented scenario files.
//!
//! ```text
//! # three replicas, leader crash
//! n = 3
//! seed = 7
//! repl_delay = 1,2
//! fault = 400,crash,0
//! fault = 300,pause,1,120
//! fault = 200,delay,1>0,20,100
//! op = 200,put,a,1
//! op = 210,get,a
//! doctor = stale-read
//! ```
//!
//! Delays are `base,jitter`. A delay fault without a duration lasts until
//! the end of the run.

use std::fmt::Write as _;
use std::str::FromStr;

use permsmr::doctor::Fixture;
use permsmr::fabric::DelayModel;
use permsmr::harness::{FaultAction, FaultSpec, OpSpec, Scenario};
use permsmr::kv::Command;
use permsmr::{ReplicaId, Time};

use crate::error::ParseError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioFile {
    pub scenario: Scenario,
    pub doctor: Option<Fixture>,
}

fn num<T: FromStr>(s: &str, what: &str) -> Result<T, String> {
    s.trim()
        .parse()
        .map_err(|_| format!("{what}: expected a number, got {s:?}"))
}

fn flag(s: &str, what: &str) -> Result<bool, String> {
    match s.trim() {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        other => Err(format!("{what}: expected true or false, got {other:?}")),
    }
}

fn replica(s: &str) -> Result<ReplicaId, String> {
    num::<u8>(s, "replica").map(ReplicaId)
}

fn delay(s: &str, what: &str) -> Result<DelayModel, String> {
    let (base, jitter) = s
        .split_once(',')
        .ok_or_else(|| format!("{what}: expected base,jitter"))?;
    Ok(DelayModel {
        base: num(base, what)?,
        jitter: num(jitter, what)?,
    })
}

fn fault(s: &str) -> Result<FaultSpec, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let time = num(parts[0], "fault time")?;
    let action = match (parts.get(1).copied(), parts.get(2..).unwrap_or(&[])) {
        (Some("crash"), [target]) => FaultAction::Crash(replica(target)?),
        (Some("pause"), [target, duration]) => FaultAction::Pause {
            target: replica(target)?,
            duration: num(duration, "pause duration")?,
        },
        (Some("delay"), [pair, amount, rest @ ..]) if rest.len() <= 1 => {
            let (from, to) = pair
                .split_once('>')
                .ok_or_else(|| format!("delay target {pair:?}: expected from>to"))?;
            FaultAction::Delay {
                from: replica(from)?,
                to: replica(to)?,
                amount: num(amount, "delay amount")?,
                duration: rest.first().map(|d| num(d, "delay duration")).transpose()?,
            }
        }
        (Some(kind @ ("crash" | "pause" | "delay")), _) => {
            return Err(format!("wrong number of fields for {kind} fault"))
        }
        (Some(other), _) => return Err(format!("unknown fault action {other:?}")),
        (None, _) => return Err("fault needs time,action,target".into()),
    };
    Ok(FaultSpec { time, action })
}

fn op(s: &str) -> Result<OpSpec, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let time = num(parts[0], "op time")?;
    let cmd = match &parts[1..] {
        ["put", key, value] => Command::Put {
            key: key.as_bytes().to_vec(),
            value: value.as_bytes().to_vec(),
        },
        ["get", key] => Command::Get {
            key: key.as_bytes().to_vec(),
        },
        _ => {
            return Err(format!(
                "op {s:?}: expected time,put,key,value or time,get,key"
            ))
        }
    };
    Ok(OpSpec { time, cmd })
}

impl FromStr for ScenarioFile {
    type Err = ParseError;

    fn from_str(text: &str) -> Result<Self, ParseError> {
        let mut sc = Scenario::default();
        let mut doctor = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = |msg: String| ParseError { line: i + 1, msg };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| at(format!("expected key = value, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            let res: Result<(), String> = (|| {
                match key {
                    "n" => sc.n = num(value, key)?,
                    "seed" => sc.seed = num(value, key)?,
                    "horizon" => sc.horizon = num(value, key)?,
                    "t_hb" => sc.t_hb = num(value, key)?,
                    "t_scan" => sc.t_scan = num(value, key)?,
                    "l_perm" => sc.l_perm = num(value, key)?,
                    "t_conn" => sc.t_conn = num(value, key)?,
                    "repl_delay" => sc.repl = delay(value, key)?,
                    "bg_delay" => sc.bg = delay(value, key)?,
                    "capacity" => sc.capacity = num(value, key)?,
                    "value_size" => sc.value_size = num(value, key)?,
                    "torn_writes" => sc.torn_writes = flag(value, key)?,
                    "chunk" => sc.chunk = num(value, key)?,
                    "omit_prepare" => sc.omit_prepare = flag(value, key)?,
                    "update_followers" => sc.update_followers = flag(value, key)?,
                    "recycling" => sc.recycling = flag(value, key)?,
                    "grace" => sc.grace = num(value, key)?,
                    "recycle_period" => sc.recycle_period = num(value, key)?,
                    "client_timeout" => sc.client_timeout = num(value, key)?,
                    "client_retry" => sc.client_retry = num(value, key)?,
                    "clients" => sc.clients = num(value, key)?,
                    "score_max" => sc.score.max = num(value, key)?,
                    "score_fail" => sc.score.fail_below = num(value, key)?,
                    "score_recover" => sc.score.recover_above = num(value, key)?,
                    "fault" => sc.faults.push(fault(value)?),
                    "op" => sc.ops.push(op(value)?),
                    "doctor" => {
                        doctor = Some(
                            Fixture::parse(value)
                                .ok_or_else(|| format!("unknown doctor fixture {value:?}"))?,
                        )
                    }
                    other => return Err(format!("unknown key {other:?}")),
                }
                Ok(())
            })();
            res.map_err(at)?;
        }
        Ok(ScenarioFile {
            scenario: sc,
            doctor,
        })
    }
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

/// Renders a scenario in the file format. Keys and values must not contain
/// `,` or `#` to survive a round trip.
pub fn render(sc: &Scenario, doctor: Option<Fixture>) -> String {
    let mut out = String::new();
    let mut kv = |k: &str, v: &dyn std::fmt::Display| {
        let _ = writeln!(out, "{k} = {v}");
    };
    kv("n", &sc.n);
    kv("seed", &sc.seed);
    kv("horizon", &sc.horizon);
    kv("t_hb", &sc.t_hb);
    kv("t_scan", &sc.t_scan);
    kv("l_perm", &sc.l_perm);
    kv("t_conn", &sc.t_conn);
    kv(
        "repl_delay",
        &format_args!("{},{}", sc.repl.base, sc.repl.jitter),
    );
    kv("bg_delay", &format_args!("{},{}", sc.bg.base, sc.bg.jitter));
    kv("capacity", &sc.capacity);
    kv("value_size", &sc.value_size);
    kv("torn_writes", &sc.torn_writes);
    kv("chunk", &sc.chunk);
    kv("omit_prepare", &sc.omit_prepare);
    kv("update_followers", &sc.update_followers);
    kv("recycling", &sc.recycling);
    kv("grace", &sc.grace);
    kv("recycle_period", &sc.recycle_period);
    kv("client_timeout", &sc.client_timeout);
    kv("client_retry", &sc.client_retry);
    kv("clients", &sc.clients);
    kv("score_max", &sc.score.max);
    kv("score_fail", &sc.score.fail_below);
    kv("score_recover", &sc.score.recover_above);
    if let Some(f) = doctor {
        kv("doctor", &f.as_str());
    }
    for f in &sc.faults {
        let t: Time = f.time;
        match f.action {
            FaultAction::Crash(r) => kv("fault", &format_args!("{t},crash,{}", r.0)),
            FaultAction::Pause { target, duration } => {
                kv("fault", &format_args!("{t},pause,{},{duration}", target.0))
            }
            FaultAction::Delay {
                from,
                to,
                amount,
                duration,
            } => match duration {
                Some(d) => kv(
                    "fault",
                    &format_args!("{t},delay,{}>{},{amount},{d}", from.0, to.0),
                ),
                None => kv(
                    "fault",
                    &format_args!("{t},delay,{}>{},{amount}", from.0, to.0),
                ),
            },
        }
    }
    for o in &sc.ops {
        match &o.cmd {
            Command::Put { key, value } => kv(
                "op",
                &format_args!("{},put,{},{}", o.time, text(key), text(value)),
            ),
            Command::Get { key } => kv("op", &format_args!("{},get,{}", o.time, text(key))),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_the_documented_example() {
        let f: ScenarioFile = "\
            # comment\n\
            n = 5\n\
            repl_delay = 2, 0\n\
            torn_writes = on\n\
            fault = 400,crash,0\n\
            fault = 300,pause,1,120\n\
            fault = 200,delay,1>0,20\n\
            op = 200,put,a,1\n\
            op = 210,get,a  # trailing\n\
            doctor = stale-read\n"
            .parse()
            .unwrap();
        let sc = &f.scenario;
        assert_eq!(sc.n, 5);
        assert_eq!(sc.repl, DelayModel { base: 2, jitter: 0 });
        assert!(sc.torn_writes);
        assert_eq!(sc.faults.len(), 3);
        assert_eq!(
            sc.faults[2].action,
            FaultAction::Delay {
                from: ReplicaId(1),
                to: ReplicaId(0),
                amount: 20,
                duration: None
            }
        );
        assert_eq!(sc.ops[1].cmd, Command::Get { key: b"a".to_vec() });
        assert_eq!(f.doctor, Some(Fixture::StaleRead));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = "n = 3\n\nfault = 10,explode,0\n"
            .parse::<ScenarioFile>()
            .unwrap_err();
        assert_eq!(err.line, 3);
        assert!(err.msg.contains("explode"));
        let err = "bogus = 1".parse::<ScenarioFile>().unwrap_err();
        assert_eq!(err.line, 1);
        let err = "fault = 10,pause,0".parse::<ScenarioFile>().unwrap_err();
        assert!(err.msg.contains("wrong number"));
    }

    #[test]
    fn render_round_trips() {
        let sc = Scenario {
            n: 5,
            faults: vec![
                FaultSpec {
                    time: 9,
                    action: FaultAction::Delay {
                        from: ReplicaId(3),
                        to: ReplicaId(4),
                        amount: 7,
                        duration: Some(30),
                    },
                },
                FaultSpec {
                    time: 10,
                    action: FaultAction::Crash(ReplicaId(2)),
                },
            ],
            ops: vec![OpSpec {
                time: 5,
                cmd: Command::Put {
                    key: b"k".to_vec(),
                    value: b"v v".to_vec(),
                },
            }],
            ..Scenario::default()
        };
        let back: ScenarioFile = render(&sc, Some(Fixture::DoubleGrant)).parse().unwrap();
        assert_eq!(back.scenario, sc);
        assert_eq!(back.doctor, Some(Fixture::DoubleGrant));
    }
}
