//! Toy replicated key-value store used as the state machine.
//!
//! Payload encoding (at most one slot payload):
//!
//! ```text
//! [tag: 1 = PUT, 2 = GET][op id: u32 LE][klen: u8][key][vlen: u8][value]
//! ```
//!
//! GET carries `vlen = 0`. Responses are `[0]` (absent), `[1, value..]`
//! (present) or `[0xFF]` (malformed command).

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

const TAG_PUT: u8 = 1;
const TAG_GET: u8 = 2;
pub const RESP_ABSENT: u8 = 0;
pub const RESP_PRESENT: u8 = 1;
pub const RESP_MALFORMED: u8 = 0xFF;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Command {
    Put { key: Vec<u8>, value: Vec<u8> },
    Get { key: Vec<u8> },
}

impl Command {
    pub fn key(&self) -> &[u8] {
        match self {
            Command::Put { key, .. } | Command::Get { key } => key,
        }
    }
}

pub fn encode(op: u32, cmd: &Command, max: usize) -> Result<Vec<u8>> {
    let (tag, key, value): (u8, &[u8], &[u8]) = match cmd {
        Command::Put { key, value } => (TAG_PUT, key, value),
        Command::Get { key } => (TAG_GET, key, &[]),
    };
    if key.len() > u8::MAX as usize || value.len() > u8::MAX as usize {
        return Err(Error::OversizeValue {
            len: key.len().max(value.len()),
            max: u8::MAX as usize,
        });
    }
    let mut out = Vec::with_capacity(7 + key.len() + value.len());
    out.push(tag);
    out.extend_from_slice(&op.to_le_bytes());
    out.push(key.len() as u8);
    out.extend_from_slice(key);
    out.push(value.len() as u8);
    out.extend_from_slice(value);
    if out.len() > max {
        return Err(Error::OversizeValue {
            len: out.len(),
            max,
        });
    }
    Ok(out)
}

/// Operation id carried by a payload, if the header is intact.
pub fn op_id(payload: &[u8]) -> Option<u32> {
    let b = payload.get(1..5)?;
    Some(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
}

pub fn decode(payload: &[u8]) -> Option<(u32, Command)> {
    let op = op_id(payload)?;
    let klen = *payload.get(5)? as usize;
    let key = payload.get(6..6 + klen)?.to_vec();
    let vlen = *payload.get(6 + klen)? as usize;
    let value = payload.get(7 + klen..7 + klen + vlen)?.to_vec();
    if payload.len() != 7 + klen + vlen {
        return None;
    }
    match payload[0] {
        TAG_PUT => Some((op, Command::Put { key, value })),
        TAG_GET if vlen == 0 => Some((op, Command::Get { key })),
        _ => None,
    }
}

pub fn response(value: Option<&[u8]>) -> Vec<u8> {
    match value {
        None => vec![RESP_ABSENT],
        Some(v) => {
            let mut out = vec![RESP_PRESENT];
            out.extend_from_slice(v);
            out
        }
    }
}

/// Decoded response: `Some(Some(v))` present, `Some(None)` absent, `None`
/// malformed.
pub fn parse_response(resp: &[u8]) -> Option<Option<&[u8]>> {
    match *resp.first()? {
        RESP_ABSENT if resp.len() == 1 => Some(None),
        RESP_PRESENT => Some(Some(&resp[1..])),
        _ => None,
    }
}

/// Deterministic store. Commands are deduplicated by operation id: a
/// re-applied id returns the cached response without executing again.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KvStore {
    map: BTreeMap<Vec<u8>, Vec<u8>>,
    responses: BTreeMap<u32, Vec<u8>>,
}

impl KvStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Applies one committed payload. Returns the operation id (if any) and
    /// the response.
    pub fn apply(&mut self, payload: &[u8]) -> (Option<u32>, Vec<u8>) {
        let Some((op, cmd)) = decode(payload) else {
            return (op_id(payload), vec![RESP_MALFORMED]);
        };
        if let Some(cached) = self.responses.get(&op) {
            return (Some(op), cached.clone());
        }
        let resp = match cmd {
            Command::Put { key, value } => response(self.map.insert(key, value).as_deref()),
            Command::Get { key } => response(self.map.get(&key).map(|v| v.as_slice())),
        };
        self.responses.insert(op, resp.clone());
        (Some(op), resp)
    }

    pub fn get(&self, key: &[u8]) -> Option<&[u8]> {
        self.map.get(key).map(|v| v.as_slice())
    }

    pub fn entries(&self) -> &BTreeMap<Vec<u8>, Vec<u8>> {
        &self.map
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn put(op: u32, k: &str, v: &str) -> Vec<u8> {
        encode(
            op,
            &Command::Put {
                key: k.into(),
                value: v.into(),
            },
            64,
        )
        .unwrap()
    }

    fn get(op: u32, k: &str) -> Vec<u8> {
        encode(op, &Command::Get { key: k.into() }, 64).unwrap()
    }

    #[test]
    fn put_then_get() {
        let mut kv = KvStore::new();
        assert_eq!(kv.apply(&put(1, "a", "1")).1, vec![RESP_ABSENT]);
        assert_eq!(kv.apply(&get(2, "a")).1, vec![RESP_PRESENT, b'1']);
    }

    #[test]
    fn get_missing_is_absent() {
        assert_eq!(KvStore::new().apply(&get(1, "zz")).1, vec![RESP_ABSENT]);
    }

    #[test]
    fn put_returns_old_value() {
        let mut kv = KvStore::new();
        kv.apply(&put(1, "k", "x"));
        assert_eq!(kv.apply(&put(2, "k", "y")).1, vec![RESP_PRESENT, b'x']);
    }

    #[test]
    fn duplicate_op_is_not_reexecuted() {
        let mut kv = KvStore::new();
        kv.apply(&put(1, "k", "x"));
        kv.apply(&put(2, "k", "y"));
        assert_eq!(kv.apply(&put(1, "k", "x")).1, vec![RESP_ABSENT]);
        assert_eq!(kv.get(b"k"), Some(&b"y"[..]));
    }

    #[test]
    fn malformed_payload_is_a_noop() {
        let mut kv = KvStore::new();
        assert_eq!(kv.apply(&[9, 9]).1, vec![RESP_MALFORMED]);
        assert!(kv.entries().is_empty());
    }

    #[test]
    fn identical_logs_give_identical_states() {
        let log = [
            put(1, "a", "1"),
            put(2, "b", "2"),
            get(3, "a"),
            put(4, "a", "3"),
        ];
        let (mut x, mut y) = (KvStore::new(), KvStore::new());
        for p in &log {
            x.apply(p);
            y.apply(p);
        }
        assert_eq!(x, y);
    }

    #[test]
    fn oversize_command_rejected() {
        let cmd = Command::Put {
            key: vec![1; 40],
            value: vec![2; 40],
        };
        assert!(encode(1, &cmd, 64).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn roundtrip(op: u32, key in proptest::collection::vec(any::<u8>(), 0..20),
                         value in proptest::collection::vec(any::<u8>(), 0..30), is_put: bool) {
                let cmd = if is_put { Command::Put { key, value } } else { Command::Get { key } };
                let bytes = encode(op, &cmd, 64).unwrap();
                prop_assert_eq!(decode(&bytes), Some((op, cmd)));
            }

            #[test]
            fn decode_is_total(bytes in proptest::collection::vec(any::<u8>(), 0..80)) {
                let _ = decode(&bytes);
                let _ = KvStore::new().apply(&bytes);
            }
        }
    }
}
