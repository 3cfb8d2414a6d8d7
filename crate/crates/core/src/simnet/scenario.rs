//! Declarative description of one simulation. Names refer to nodes; a
//! [`World`](super::World) resolves them. `line` fields carry the source
//! line of the declaration for error messages (0 when built in code).

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::num::NonZeroU64;

use crate::addressing::{Address, Prefix};
use crate::datapath::Mode;
use crate::ids::Tick;
use crate::tables::Hops;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Scenario {
    pub mode: Mode,
    pub seed: u64,
    /// `(start, len)` of the reserved block every local interval must sit in.
    pub region: Option<(Address, u32)>,
    pub interval_len: u32,
    pub routers: Vec<RouterDecl>,
    pub links: Vec<LinkDecl>,
    pub prefixes: Vec<PrefixDecl>,
    pub hosts: Vec<HostDecl>,
    pub traffic: Vec<SendDecl>,
    pub perturbations: Vec<PerturbDecl>,
    pub adversaries: Vec<AdversaryDecl>,
    pub limits: Limits,
    /// Skip the interval-plan validator. Only for fixtures that reproduce
    /// overlapping intervals on purpose.
    pub bypass_interval_validation: bool,
}

impl Scenario {
    pub fn new(interval_len: u32) -> Self {
        Scenario {
            mode: Mode::Tfr,
            seed: 0,
            region: None,
            interval_len,
            routers: Vec::new(),
            links: Vec::new(),
            prefixes: Vec::new(),
            hosts: Vec::new(),
            traffic: Vec::new(),
            perturbations: Vec::new(),
            adversaries: Vec::new(),
            limits: Limits::default(),
            bypass_interval_validation: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Limits {
    pub until: Tick,
    pub idle_limit: NonZeroU64,
    pub reverse_ttl: Hops,
    /// TTL hosts put on the datagrams they originate.
    pub host_ttl: Hops,
}

impl Default for Limits {
    fn default() -> Self {
        Limits { until: 1000, idle_limit: NonZeroU64::new(10_000).expect("nonzero"), reverse_ttl: 64, host_ttl: 64 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RouterDecl {
    pub name: String,
    pub start: Address,
    pub eps: u32,
    pub line: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LinkDecl {
    pub a: String,
    pub b: String,
    pub line: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PrefixDecl {
    pub prefix: Prefix,
    pub router: String,
    pub line: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    /// Gets an address drawn from its router's own interval.
    Client,
    /// Has a global address inside a prefix attached to its router.
    Server,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Client => "client",
            Role::Server => "server",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HostDecl {
    pub name: String,
    pub router: String,
    pub role: Role,
    pub addr: Option<Address>,
    /// Echo every delivered datagram back to its source.
    pub reply: bool,
    pub line: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Target {
    Addr(Address),
    /// A server host, by name.
    Host(String),
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::Addr(a) => write!(f, "{a}"),
            Target::Host(h) => f.write_str(h),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SendDecl {
    pub tick: Tick,
    pub host: String,
    pub dst: Target,
    pub payload: String,
    pub line: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Perturbation {
    Cycle { routers: Vec<String>, prefix: Prefix },
    Stale { overrides: Vec<(String, Prefix, Hops)> },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PerturbDecl {
    pub tick: Tick,
    pub kind: Perturbation,
    pub line: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AdversaryKind {
    /// Attached host that lies about its source address.
    SpoofingHost,
    /// Rogue neighbor router that fabricates forward datagrams.
    SpoofingRouter,
    /// Rogue neighbor router that re-sends headers captured on another link.
    ReplayingRouter,
}

impl AdversaryKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AdversaryKind::SpoofingHost => "spoofing-host",
            AdversaryKind::SpoofingRouter => "spoofing-router",
            AdversaryKind::ReplayingRouter => "replaying-router",
        }
    }

    pub fn is_router(self) -> bool {
        !matches!(self, AdversaryKind::SpoofingHost)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Forge {
    /// Values outside the interval the victim router expects.
    OutOfInterval,
    /// Values inside the expected interval (locally valid headers).
    InInterval,
    Fixed {
        src: Address,
        origin: Address,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AdversaryDecl {
    pub name: String,
    pub kind: AdversaryKind,
    /// Router the adversary is attached to or linked with.
    pub attach: String,
    /// Own interval start, for router adversaries.
    pub interval_start: Option<Address>,
    pub target: Target,
    pub forge: Forge,
    pub start: Tick,
    pub period: Tick,
    pub count: u32,
    /// Link whose forward headers a replaying router re-sends.
    pub capture: Option<(String, String)>,
    pub line: usize,
}

/// One problem found while resolving a scenario.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigError {
    pub line: usize,
    pub clause: &'static str,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}: {}", self.line, self.clause, self.message)
    }
}

impl core::error::Error for ConfigError {}
