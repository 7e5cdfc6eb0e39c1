//! Trace events.
//!
//! Every fabric operation, permission change, protocol phase, commit and
//! fault is recorded as a [`TraceEvent`]. Checkers reconstruct replica state
//! from the trace alone.

use alloc::string::String;
use alloc::vec::Vec;

use crate::types::{Plane, RegionKind, ReplicaId, Time};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OpKind {
    Read,
    Write,
}

impl OpKind {
    pub const fn as_str(self) -> &'static str {
        match self {
            OpKind::Read => "read",
            OpKind::Write => "write",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "read" => Some(OpKind::Read),
            "write" => Some(OpKind::Write),
            _ => None,
        }
    }
}

/// Completion status of a work request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Status {
    Ok,
    PermissionDenied,
    TargetCrashed,
}

impl Status {
    pub const fn as_str(self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::PermissionDenied => "denied",
            Status::TargetCrashed => "crashed",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ok" => Some(Status::Ok),
            "denied" => Some(Status::PermissionDenied),
            "crashed" => Some(Status::TargetCrashed),
            _ => None,
        }
    }
}

/// Why a propose call gave up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AbortReason {
    PermissionLost,
    StaleProposal,
    FollowerCrashed,
    /// The replica stopped believing it is the leader.
    Deposed,
}

impl AbortReason {
    pub const fn as_str(self) -> &'static str {
        match self {
            AbortReason::PermissionLost => "permission_lost",
            AbortReason::StaleProposal => "stale_proposal",
            AbortReason::FollowerCrashed => "follower_crashed",
            AbortReason::Deposed => "deposed",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "permission_lost" => Some(AbortReason::PermissionLost),
            "stale_proposal" => Some(AbortReason::StaleProposal),
            "follower_crashed" => Some(AbortReason::FollowerCrashed),
            "deposed" => Some(AbortReason::Deposed),
            _ => None,
        }
    }
}

/// Leader-side protocol phase markers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    Permission,
    CatchUp,
    UpdateFollowers,
    Prepare,
    Accept,
    Recycle,
    FuoPush,
}

impl Phase {
    pub const fn as_str(self) -> &'static str {
        match self {
            Phase::Permission => "permission",
            Phase::CatchUp => "catchup",
            Phase::UpdateFollowers => "update",
            Phase::Prepare => "prepare",
            Phase::Accept => "accept",
            Phase::Recycle => "recycle",
            Phase::FuoPush => "fuopush",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "permission" => Phase::Permission,
            "catchup" => Phase::CatchUp,
            "update" => Phase::UpdateFollowers,
            "prepare" => Phase::Prepare,
            "accept" => Phase::Accept,
            "recycle" => Phase::Recycle,
            "fuopush" => Phase::FuoPush,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FaultKind {
    Crash,
    Pause {
        duration: Time,
    },
    Resume,
    DelaySpike {
        to: ReplicaId,
        amount: Time,
        duration: Time,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventKind {
    /// Run parameters checkers need to decode log offsets. First event of a
    /// harness trace; `replica` is `None`.
    Setup {
        n: u8,
        capacity: u64,
        value_size: u32,
    },
    /// A work request was posted by `replica`.
    Post {
        req: u64,
        plane: Plane,
        op: OpKind,
        target: ReplicaId,
        region: RegionKind,
        offset: u32,
        len: u32,
    },
    /// Torn-write mode: bytes `[0, upto)` of request `req` are now applied.
    Chunk {
        req: u64,
        target: ReplicaId,
        upto: u32,
    },
    /// Request `req` issued by `replica` was delivered at `target`. For
    /// writes with `status = Ok`, every byte is applied at this instant.
    Apply {
        req: u64,
        target: ReplicaId,
        region: RegionKind,
        op: OpKind,
        status: Status,
    },
    Complete {
        req: u64,
        status: Status,
    },
    /// The permission worker of `replica` took a request from `requester`.
    PermRequest {
        requester: ReplicaId,
    },
    Revoke {
        holder: Option<ReplicaId>,
    },
    Grant {
        requester: ReplicaId,
    },
    Violation {
        detail: String,
    },

    SlotWrite {
        req: u64,
        target: ReplicaId,
        index: u64,
        proposal: u64,
        value: Vec<u8>,
    },
    ZeroWrite {
        req: u64,
        target: ReplicaId,
        lo: u64,
        hi: u64,
    },
    FuoWrite {
        req: u64,
        target: ReplicaId,
        fuo: u64,
    },
    MinProposalWrite {
        req: u64,
        target: ReplicaId,
        proposal: u64,
    },
    /// The replica changed its own FUO header.
    LocalFuo {
        fuo: u64,
    },
    Commit {
        index: u64,
        value: Vec<u8>,
    },
    Execute {
        index: u64,
    },

    Phase {
        phase: Phase,
    },
    Abort {
        reason: AbortReason,
    },
    ProposeBegin {
        call: u64,
    },
    ProposeEnd {
        call: u64,
        index: u64,
    },
    Role {
        leader: ReplicaId,
    },
    Suspect {
        peer: ReplicaId,
    },
    Trust {
        peer: ReplicaId,
    },

    /// Client events; `replica` is `None`.
    Invoke {
        op: u64,
        payload: Vec<u8>,
    },
    Respond {
        op: u64,
        result: Vec<u8>,
    },

    Fault {
        fault: FaultKind,
    },
}

impl EventKind {
    pub const fn name(&self) -> &'static str {
        match self {
            EventKind::Setup { .. } => "setup",
            EventKind::Post { .. } => "post",
            EventKind::Chunk { .. } => "chunk",
            EventKind::Apply { .. } => "apply",
            EventKind::Complete { .. } => "complete",
            EventKind::PermRequest { .. } => "permreq",
            EventKind::Revoke { .. } => "revoke",
            EventKind::Grant { .. } => "grant",
            EventKind::Violation { .. } => "violation",
            EventKind::SlotWrite { .. } => "slotw",
            EventKind::ZeroWrite { .. } => "zerow",
            EventKind::FuoWrite { .. } => "fuow",
            EventKind::MinProposalWrite { .. } => "minpropw",
            EventKind::LocalFuo { .. } => "fuo",
            EventKind::Commit { .. } => "commit",
            EventKind::Execute { .. } => "exec",
            EventKind::Phase { .. } => "phase",
            EventKind::Abort { .. } => "abort",
            EventKind::ProposeBegin { .. } => "propose_begin",
            EventKind::ProposeEnd { .. } => "propose_end",
            EventKind::Role { .. } => "role",
            EventKind::Suspect { .. } => "suspect",
            EventKind::Trust { .. } => "trust",
            EventKind::Invoke { .. } => "invoke",
            EventKind::Respond { .. } => "respond",
            EventKind::Fault { .. } => "fault",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEvent {
    pub time: Time,
    /// Emitting replica; `None` for client-side events.
    pub replica: Option<ReplicaId>,
    pub kind: EventKind,
}

impl TraceEvent {
    pub fn new(time: Time, replica: ReplicaId, kind: EventKind) -> Self {
        TraceEvent {
            time,
            replica: Some(replica),
            kind,
        }
    }

    pub fn client(time: Time, kind: EventKind) -> Self {
        TraceEvent {
            time,
            replica: None,
            kind,
        }
    }
}
