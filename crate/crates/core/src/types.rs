use core::fmt;

/// Simulated time, in integer ticks.
pub type Time = u64;

/// Identifier of a replica. Replica ids are dense: `0..n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct ReplicaId(pub u8);

impl ReplicaId {
    pub const fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ReplicaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u8> for ReplicaId {
    fn from(v: u8) -> Self {
        ReplicaId(v)
    }
}

/// Which of a replica's two memory regions an operation addresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RegionKind {
    /// Consensus log; writable by at most one remote holder at a time.
    Log,
    /// Heartbeat, permission request/ack arrays and log head; always open.
    Background,
}

impl RegionKind {
    pub const fn as_str(self) -> &'static str {
        match self {
            RegionKind::Log => "log",
            RegionKind::Background => "bg",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "log" => Some(RegionKind::Log),
            "bg" => Some(RegionKind::Background),
            _ => None,
        }
    }
}

/// Connection plane. Each replica pair has one queue pair per plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Plane {
    Replication,
    Background,
}

impl Plane {
    pub const fn as_str(self) -> &'static str {
        match self {
            Plane::Replication => "repl",
            Plane::Background => "bg",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "repl" => Some(Plane::Replication),
            "bg" => Some(Plane::Background),
            _ => None,
        }
    }
}

/// Smallest number of replicas that forms a quorum.
pub const fn majority(n: usize) -> usize {
    n / 2 + 1
}
