//! Text form of traces: one record per line,
//! `time|replica|kind|field=value|...`.
//!
//! `replica` is the emitting replica id, `c` for client events and `-` for
//! the run header. Byte strings are lowercase hex (empty is allowed); a
//! missing replica id in a field is `-`. In free text `%`, `|` and newlines
//! are percent-escaped.
//!
//! | kind | fields |
//! |------|--------|
//! | setup | n, capacity, value_size |
//! | post | req, plane, op, target, region, offset, len |
//! | chunk | req, target, upto |
//! | apply | req, target, region, op, status |
//! | complete | req, status |
//! | permreq | requester |
//! | revoke | holder |
//! | grant | requester |
//! | violation | detail |
//! | slotw | req, target, index, proposal, value |
//! | zerow | req, target, lo, hi |
//! | fuow | req, target, fuo |
//! | minpropw | req, target, proposal |
//! | fuo | fuo |
//! | commit | index, value |
//! | exec | index |
//! | phase | phase |
//! | abort | reason |
//! | propose_begin | call |
//! | propose_end | call, index |
//! | role | leader |
//! | suspect, trust | peer |
//! | invoke | op, payload |
//! | respond | op, result |
//! | fault | fault (crash, pause, resume, delay), duration, to, amount |

use std::fmt::Write as _;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use permsmr::trace::{AbortReason, EventKind, FaultKind, OpKind, Phase, Status, TraceEvent};
use permsmr::{Plane, RegionKind, ReplicaId};

use crate::error::ParseError;

fn escape(s: &str) -> String {
    s.replace('%', "%25")
        .replace('|', "%7C")
        .replace('\n', "%0A")
}

fn unescape(s: &str) -> String {
    s.replace("%0A", "\n")
        .replace("%7C", "|")
        .replace("%25", "%")
}

fn opt_replica(r: Option<ReplicaId>) -> String {
    r.map_or_else(|| "-".into(), |r| r.0.to_string())
}

/// Renders one event without the trailing newline.
pub fn format_event(e: &TraceEvent) -> String {
    let who = match (&e.kind, e.replica) {
        (_, Some(r)) => r.0.to_string(),
        (EventKind::Invoke { .. } | EventKind::Respond { .. }, None) => "c".into(),
        (_, None) => "-".into(),
    };
    let mut s = format!("{}|{}|{}", e.time, who, e.kind.name());
    let mut f = |k: &str, v: &dyn std::fmt::Display| {
        let _ = write!(s, "|{k}={v}");
    };
    match &e.kind {
        EventKind::Setup {
            n,
            capacity,
            value_size,
        } => {
            f("n", n);
            f("capacity", capacity);
            f("value_size", value_size);
        }
        EventKind::Post {
            req,
            plane,
            op,
            target,
            region,
            offset,
            len,
        } => {
            f("req", req);
            f("plane", &plane.as_str());
            f("op", &op.as_str());
            f("target", &target.0);
            f("region", &region.as_str());
            f("offset", offset);
            f("len", len);
        }
        EventKind::Chunk { req, target, upto } => {
            f("req", req);
            f("target", &target.0);
            f("upto", upto);
        }
        EventKind::Apply {
            req,
            target,
            region,
            op,
            status,
        } => {
            f("req", req);
            f("target", &target.0);
            f("region", &region.as_str());
            f("op", &op.as_str());
            f("status", &status.as_str());
        }
        EventKind::Complete { req, status } => {
            f("req", req);
            f("status", &status.as_str());
        }
        EventKind::PermRequest { requester } | EventKind::Grant { requester } => {
            f("requester", &requester.0)
        }
        EventKind::Revoke { holder } => f("holder", &opt_replica(*holder)),
        EventKind::Violation { detail } => f("detail", &escape(detail)),
        EventKind::SlotWrite {
            req,
            target,
            index,
            proposal,
            value,
        } => {
            f("req", req);
            f("target", &target.0);
            f("index", index);
            f("proposal", proposal);
            f("value", &hex::encode(value));
        }
        EventKind::ZeroWrite {
            req,
            target,
            lo,
            hi,
        } => {
            f("req", req);
            f("target", &target.0);
            f("lo", lo);
            f("hi", hi);
        }
        EventKind::FuoWrite { req, target, fuo } => {
            f("req", req);
            f("target", &target.0);
            f("fuo", fuo);
        }
        EventKind::MinProposalWrite {
            req,
            target,
            proposal,
        } => {
            f("req", req);
            f("target", &target.0);
            f("proposal", proposal);
        }
        EventKind::LocalFuo { fuo } => f("fuo", fuo),
        EventKind::Commit { index, value } => {
            f("index", index);
            f("value", &hex::encode(value));
        }
        EventKind::Execute { index } => f("index", index),
        EventKind::Phase { phase } => f("phase", &phase.as_str()),
        EventKind::Abort { reason } => f("reason", &reason.as_str()),
        EventKind::ProposeBegin { call } => f("call", call),
        EventKind::ProposeEnd { call, index } => {
            f("call", call);
            f("index", index);
        }
        EventKind::Role { leader } => f("leader", &leader.0),
        EventKind::Suspect { peer } | EventKind::Trust { peer } => f("peer", &peer.0),
        EventKind::Invoke { op, payload } => {
            f("op", op);
            f("payload", &hex::encode(payload));
        }
        EventKind::Respond { op, result } => {
            f("op", op);
            f("result", &hex::encode(result));
        }
        EventKind::Fault { fault } => match fault {
            FaultKind::Crash => f("fault", &"crash"),
            FaultKind::Resume => f("fault", &"resume"),
            FaultKind::Pause { duration } => {
                f("fault", &"pause");
                f("duration", duration);
            }
            FaultKind::DelaySpike {
                to,
                amount,
                duration,
            } => {
                f("fault", &"delay");
                f("to", &to.0);
                f("amount", amount);
                f("duration", duration);
            }
        },
    }
    s
}

struct Fields<'a>(Vec<(&'a str, &'a str)>);

impl<'a> Fields<'a> {
    fn raw(&self, k: &str) -> Result<&'a str, String> {
        self.0
            .iter()
            .find(|(key, _)| *key == k)
            .map(|(_, v)| *v)
            .ok_or_else(|| format!("missing field {k}"))
    }

    fn num<T: FromStr>(&self, k: &str) -> Result<T, String> {
        let v = self.raw(k)?;
        v.parse()
            .map_err(|_| format!("field {k}: bad number {v:?}"))
    }

    fn replica(&self, k: &str) -> Result<ReplicaId, String> {
        self.num::<u8>(k).map(ReplicaId)
    }

    fn opt_replica(&self, k: &str) -> Result<Option<ReplicaId>, String> {
        match self.raw(k)? {
            "-" => Ok(None),
            _ => self.replica(k).map(Some),
        }
    }

    fn bytes(&self, k: &str) -> Result<Vec<u8>, String> {
        hex::decode(self.raw(k)?).map_err(|e| format!("field {k}: {e}"))
    }

    fn named<T>(&self, k: &str, parse: fn(&str) -> Option<T>) -> Result<T, String> {
        let v = self.raw(k)?;
        parse(v).ok_or_else(|| format!("field {k}: unknown value {v:?}"))
    }
}

fn parse_kind(kind: &str, f: &Fields<'_>) -> Result<EventKind, String> {
    Ok(match kind {
        "setup" => EventKind::Setup {
            n: f.num("n")?,
            capacity: f.num("capacity")?,
            value_size: f.num("value_size")?,
        },
        "post" => EventKind::Post {
            req: f.num("req")?,
            plane: f.named("plane", Plane::parse)?,
            op: f.named("op", OpKind::parse)?,
            target: f.replica("target")?,
            region: f.named("region", RegionKind::parse)?,
            offset: f.num("offset")?,
            len: f.num("len")?,
        },
        "chunk" => EventKind::Chunk {
            req: f.num("req")?,
            target: f.replica("target")?,
            upto: f.num("upto")?,
        },
        "apply" => EventKind::Apply {
            req: f.num("req")?,
            target: f.replica("target")?,
            region: f.named("region", RegionKind::parse)?,
            op: f.named("op", OpKind::parse)?,
            status: f.named("status", Status::parse)?,
        },
        "complete" => EventKind::Complete {
            req: f.num("req")?,
            status: f.named("status", Status::parse)?,
        },
        "permreq" => EventKind::PermRequest {
            requester: f.replica("requester")?,
        },
        "revoke" => EventKind::Revoke {
            holder: f.opt_replica("holder")?,
        },
        "grant" => EventKind::Grant {
            requester: f.replica("requester")?,
        },
        "violation" => EventKind::Violation {
            detail: unescape(f.raw("detail")?),
        },
        "slotw" => EventKind::SlotWrite {
            req: f.num("req")?,
            target: f.replica("target")?,
            index: f.num("index")?,
            proposal: f.num("proposal")?,
            value: f.bytes("value")?,
        },
        "zerow" => EventKind::ZeroWrite {
            req: f.num("req")?,
            target: f.replica("target")?,
            lo: f.num("lo")?,
            hi: f.num("hi")?,
        },
        "fuow" => EventKind::FuoWrite {
            req: f.num("req")?,
            target: f.replica("target")?,
            fuo: f.num("fuo")?,
        },
        "minpropw" => EventKind::MinProposalWrite {
            req: f.num("req")?,
            target: f.replica("target")?,
            proposal: f.num("proposal")?,
        },
        "fuo" => EventKind::LocalFuo { fuo: f.num("fuo")? },
        "commit" => EventKind::Commit {
            index: f.num("index")?,
            value: f.bytes("value")?,
        },
        "exec" => EventKind::Execute {
            index: f.num("index")?,
        },
        "phase" => EventKind::Phase {
            phase: f.named("phase", Phase::parse)?,
        },
        "abort" => EventKind::Abort {
            reason: f.named("reason", AbortReason::parse)?,
        },
        "propose_begin" => EventKind::ProposeBegin {
            call: f.num("call")?,
        },
        "propose_end" => EventKind::ProposeEnd {
            call: f.num("call")?,
            index: f.num("index")?,
        },
        "role" => EventKind::Role {
            leader: f.replica("leader")?,
        },
        "suspect" => EventKind::Suspect {
            peer: f.replica("peer")?,
        },
        "trust" => EventKind::Trust {
            peer: f.replica("peer")?,
        },
        "invoke" => EventKind::Invoke {
            op: f.num("op")?,
            payload: f.bytes("payload")?,
        },
        "respond" => EventKind::Respond {
            op: f.num("op")?,
            result: f.bytes("result")?,
        },
        "fault" => EventKind::Fault {
            fault: match f.raw("fault")? {
                "crash" => FaultKind::Crash,
                "resume" => FaultKind::Resume,
                "pause" => FaultKind::Pause {
                    duration: f.num("duration")?,
                },
                "delay" => FaultKind::DelaySpike {
                    to: f.replica("to")?,
                    amount: f.num("amount")?,
                    duration: f.num("duration")?,
                },
                other => return Err(format!("unknown fault {other:?}")),
            },
        },
        other => return Err(format!("unknown record kind {other:?}")),
    })
}

/// Parses one record (without its newline).
pub fn parse_event(line: &str) -> Result<TraceEvent, String> {
    let mut parts = line.split('|');
    let time = parts.next().unwrap_or("");
    let time = time.parse().map_err(|_| format!("bad time {time:?}"))?;
    let who = parts.next().ok_or("missing replica column")?;
    let replica = match who {
        "c" | "-" => None,
        r => Some(ReplicaId(
            r.parse().map_err(|_| format!("bad replica {r:?}"))?,
        )),
    };
    let kind = parts.next().ok_or("missing kind column")?;
    let fields = parts
        .map(|p| {
            p.split_once('=')
                .ok_or_else(|| format!("field {p:?} lacks '='"))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let kind = parse_kind(kind, &Fields(fields))?;
    Ok(TraceEvent {
        time,
        replica,
        kind,
    })
}

/// Streams events to `out`, one line each.
pub fn write_trace<'a, W: Write>(
    out: &mut W,
    events: impl IntoIterator<Item = &'a TraceEvent>,
) -> io::Result<()> {
    for e in events {
        writeln!(out, "{}", format_event(e))?;
    }
    Ok(())
}

/// Reads a whole trace. Blank lines are skipped. A malformed final line
/// without a newline is reported as a truncated record.
pub fn read_trace<R: BufRead>(mut input: R) -> io::Result<Result<Vec<TraceEvent>, ParseError>> {
    let mut events = Vec::new();
    let mut buf = String::new();
    let mut line = 0;
    let mut offset = 0usize;
    loop {
        buf.clear();
        let n = input.read_line(&mut buf)?;
        if n == 0 {
            return Ok(Ok(events));
        }
        line += 1;
        let terminated = buf.ends_with('\n');
        let text = buf.trim_end_matches(['\n', '\r']);
        if !text.trim().is_empty() {
            match parse_event(text) {
                Ok(e) => events.push(e),
                Err(msg) if !terminated => {
                    return Ok(Err(ParseError {
                        line,
                        msg: format!("truncated record at byte {offset}: {msg}"),
                    }))
                }
                Err(msg) => return Ok(Err(ParseError { line, msg })),
            }
        }
        offset += n;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use permsmr::harness::{run_scenario, FaultAction, FaultSpec, OpSpec, Scenario};
    use permsmr::kv::Command;

    fn sample_trace() -> Vec<TraceEvent> {
        let sc = Scenario {
            torn_writes: true,
            ops: (0..6)
                .map(|i| OpSpec {
                    time: 150 + 10 * i,
                    cmd: Command::Put {
                        key: b"k".to_vec(),
                        value: vec![b'0' + i as u8],
                    },
                })
                .collect(),
            faults: vec![
                FaultSpec {
                    time: 160,
                    action: FaultAction::Pause {
                        target: ReplicaId(2),
                        duration: 5,
                    },
                },
                FaultSpec {
                    time: 170,
                    action: FaultAction::Delay {
                        from: ReplicaId(1),
                        to: ReplicaId(0),
                        amount: 3,
                        duration: Some(9),
                    },
                },
                FaultSpec {
                    time: 240,
                    action: FaultAction::Crash(ReplicaId(0)),
                },
            ],
            horizon: 600,
            ..Scenario::default()
        };
        run_scenario(&sc).unwrap().trace
    }

    #[test]
    fn harness_trace_round_trips() {
        let trace = sample_trace();
        let mut buf = Vec::new();
        write_trace(&mut buf, &trace).unwrap();
        let back = read_trace(&buf[..]).unwrap().unwrap();
        assert_eq!(back, trace);
    }

    #[test]
    fn odd_records_round_trip() {
        for kind in [
            EventKind::Violation {
                detail: "a|b%c\nd".into(),
            },
            EventKind::Revoke { holder: None },
            EventKind::Commit {
                index: 3,
                value: vec![],
            },
        ] {
            let e = TraceEvent::new(4, ReplicaId(1), kind);
            assert_eq!(parse_event(&format_event(&e)).unwrap(), e);
        }
    }

    #[test]
    fn client_and_header_columns() {
        let e = TraceEvent::client(
            7,
            EventKind::Respond {
                op: 2,
                result: vec![1, 0xab],
            },
        );
        assert_eq!(format_event(&e), "7|c|respond|op=2|result=01ab");
        let line = format_event(&sample_trace()[0]);
        assert!(line.starts_with("0|-|setup|n=3|"), "{line}");
    }

    #[test]
    fn truncation_is_located() {
        let text = "0|-|setup|n=3|capacity=8|value_size=64\n5|0|commit|index=0|val";
        let err = read_trace(text.as_bytes()).unwrap().unwrap_err();
        assert_eq!(err.line, 2);
        assert!(
            err.msg.starts_with("truncated record at byte 39"),
            "{}",
            err.msg
        );
    }

    #[test]
    fn bad_line_is_not_called_truncated() {
        let err = read_trace("1|0|bogus\n".as_bytes()).unwrap().unwrap_err();
        assert_eq!(err.line, 1);
        assert!(err.msg.contains("unknown record kind"));
    }
}
