use alloc::string::String;

use crate::types::{RegionKind, ReplicaId};

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Error {
    #[error("region {kind:?} of replica {owner} registered twice")]
    DuplicateRegion { owner: ReplicaId, kind: RegionKind },
    #[error("no {kind:?} region registered for replica {owner}")]
    UnknownRegion { owner: ReplicaId, kind: RegionKind },
    #[error("access [{offset}, {offset}+{len}) out of bounds for region of {size} bytes")]
    OutOfBounds {
        offset: usize,
        len: usize,
        size: usize,
    },
    #[error("value of {len} bytes exceeds slot payload capacity {max}")]
    OversizeValue { len: usize, max: usize },
    #[error("proposal number 0 is reserved for the empty slot")]
    ZeroProposal,
    #[error("slot image has {got} bytes, expected {expected}")]
    BadSlotWidth { got: usize, expected: usize },
    #[error("unknown replica {0}")]
    UnknownReplica(ReplicaId),
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error("history window of {got} concurrent operations exceeds cap {cap}")]
    WindowTooLarge { got: usize, cap: usize },
}
