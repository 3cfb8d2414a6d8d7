//! Per-router packet processing.
//!
//! Forward datagrams (global destination) are accepted only under the TTL
//! FIB rule and have their source and origin ID swapped into the next
//! hop's interval. Each relay records the upstream flow in its HRT so that
//! replies, addressed with hop-local destinations, can retrace the path.
//! The egress additionally keys the flow by origin ID in its DRT.
//!
//! Host-facing links carry unswapped values: the ingress uses the host's
//! own address as the incoming index and origin, and the egress hands the
//! origin ID to the server and takes it back unchanged.

use alloc::collections::BTreeMap;
use core::fmt;

use rand_chacha::ChaCha8Rng;

use crate::addressing::{map_in, map_out, Address, ListTable, LocalInterval, SecretOffset};
use crate::ids::{NodeId, Tick};
use crate::tables::{fib_lookup, Drt, EvictIdle, Fib, Hops, Hrt, NextHop, TableError, Upsert};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Mode {
    /// TTL FIB rule with address swapping and provenance checks.
    Tfr,
    /// Classic forwarding: decrement TTL, never rewrite addresses.
    Baseline,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Tfr => "tfr",
            Mode::Baseline => "baseline",
        })
    }
}

/// The on-link header. Which field plays which role depends on direction:
/// forward datagrams carry a hop-local `src` and `origin` and a global
/// `dst`; replies carry the global address in `src` and hop-local `dst`
/// and `origin`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Header {
    pub src: Address,
    pub dst: Address,
    pub ttl: Hops,
    pub origin: Address,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Datagram {
    pub header: Header,
    pub payload: alloc::vec::Vec<u8>,
    pub trace_id: crate::ids::TraceId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Action {
    Delivered,
    Forwarded,
    Dropped,
}

impl Action {
    pub fn as_str(self) -> &'static str {
        match self {
            Action::Delivered => "delivered",
            Action::Forwarded => "forwarded",
            Action::Dropped => "dropped",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Reason {
    TfrReject,
    NoRoute,
    NoHrtState,
    NoDrtState,
    BadProvenance,
    TtlExpired,
    TableExhausted,
    Ok,
}

impl Reason {
    pub const ALL: [Reason; 8] = [
        Reason::TfrReject,
        Reason::NoRoute,
        Reason::NoHrtState,
        Reason::NoDrtState,
        Reason::BadProvenance,
        Reason::TtlExpired,
        Reason::TableExhausted,
        Reason::Ok,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Reason::TfrReject => "tfr_reject",
            Reason::NoRoute => "no_route",
            Reason::NoHrtState => "no_hrt_state",
            Reason::NoDrtState => "no_drt_state",
            Reason::BadProvenance => "bad_provenance",
            Reason::TtlExpired => "ttl_expired",
            Reason::TableExhausted => "table_exhausted",
            Reason::Ok => "ok",
        }
    }
}

impl fmt::Display for Reason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VerdictRecord {
    pub action: Action,
    pub reason: Reason,
    pub offending_neighbor: Option<NodeId>,
}

impl VerdictRecord {
    pub fn dropped(reason: Reason) -> Self {
        VerdictRecord { action: Action::Dropped, reason, offending_neighbor: None }
    }

    pub fn bad_provenance(offender: NodeId) -> Self {
        VerdictRecord { action: Action::Dropped, reason: Reason::BadProvenance, offending_neighbor: Some(offender) }
    }
}

/// What a router does with one datagram.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Disposition {
    Forward { to: NodeId, header: Header },
    Deliver { host: NodeId, header: Header },
    Drop(VerdictRecord),
}

impl Disposition {
    pub fn record(&self) -> VerdictRecord {
        match self {
            Disposition::Forward { .. } => {
                VerdictRecord { action: Action::Forwarded, reason: Reason::Ok, offending_neighbor: None }
            }
            Disposition::Deliver { .. } => {
                VerdictRecord { action: Action::Delivered, reason: Reason::Ok, offending_neighbor: None }
            }
            Disposition::Drop(v) => *v,
        }
    }

    fn drop(reason: Reason) -> Self {
        Disposition::Drop(VerdictRecord::dropped(reason))
    }

    fn bad_provenance(offender: NodeId) -> Self {
        Disposition::Drop(VerdictRecord::bad_provenance(offender))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Classification {
    ForwardGlobal,
    /// Reply arriving from a neighbor, addressed into that neighbor's interval.
    ReverseLocal,
    /// Reply handed to the egress by an attached server.
    ReverseAtEgress,
    Invalid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TfrDecision {
    Accept { new_ttl: Hops },
    Reject,
}

/// Accept iff the incoming TTL strictly exceeds the stored distance; the
/// outgoing TTL becomes that distance.
pub fn tfr_accept(distance: Hops, ttl: Hops) -> TfrDecision {
    if ttl > distance {
        TfrDecision::Accept { new_ttl: distance }
    } else {
        TfrDecision::Reject
    }
}

/// Router state owned by one world.
#[derive(Clone, Debug)]
pub struct Router {
    pub id: NodeId,
    pub list: ListTable,
    eps: SecretOffset,
    pub fib: Fib,
    pub hrt: Hrt,
    pub drt: Drt,
    hosts: BTreeMap<NodeId, Address>,
    host_by_addr: BTreeMap<Address, NodeId>,
    rng: ChaCha8Rng,
    pub reverse_ttl: Hops,
    pub evicted: u64,
}

impl Router {
    pub fn new(id: NodeId, list: ListTable, eps: SecretOffset, rng: ChaCha8Rng) -> Self {
        let own = list.own;
        Router {
            id,
            list,
            eps,
            fib: Fib::new(),
            hrt: Hrt::new(own),
            drt: Drt::new(own),
            hosts: BTreeMap::new(),
            host_by_addr: BTreeMap::new(),
            rng,
            reverse_ttl: 64,
            evicted: 0,
        }
    }

    pub fn own(&self) -> LocalInterval {
        self.list.own
    }

    pub(crate) fn secret(&self) -> SecretOffset {
        self.eps
    }

    /// Binds `host` to this router with the address it must use as source.
    pub fn attach_host(&mut self, host: NodeId, addr: Address) {
        self.hosts.insert(host, addr);
        self.host_by_addr.insert(addr, host);
    }

    pub fn host_address(&self, host: NodeId) -> Option<Address> {
        self.hosts.get(&host).copied()
    }

    pub fn is_attached_host(&self, node: NodeId) -> bool {
        self.hosts.contains_key(&node)
    }

    pub fn hosts(&self) -> impl Iterator<Item = (NodeId, Address)> + '_ {
        self.hosts.iter().map(|(k, v)| (*k, *v))
    }

    pub fn evict(&mut self, now: Tick, idle_limit: core::num::NonZeroU64) -> usize {
        let n = self.hrt.evict_idle(now, idle_limit) + self.drt.evict_idle(now, idle_limit);
        self.evicted += n as u64;
        n
    }

    pub fn classify(&self, arrival: NodeId, header: &Header) -> Classification {
        let global = self.fib.lookup(header.dst).is_some();
        if self.is_attached_host(arrival) {
            if self.own().contains(header.dst) {
                Classification::ReverseAtEgress
            } else if global {
                Classification::ForwardGlobal
            } else {
                Classification::Invalid
            }
        } else if let Some(iv) = self.list.neighbor(arrival) {
            if iv.contains(header.dst) {
                Classification::ReverseLocal
            } else if global {
                Classification::ForwardGlobal
            } else {
                Classification::Invalid
            }
        } else {
            Classification::Invalid
        }
    }

    /// Entry point for every arrival.
    pub fn receive(&mut self, arrival: NodeId, header: Header, mode: Mode, now: Tick) -> Disposition {
        if mode == Mode::Baseline {
            return self.baseline_forward(header);
        }
        let from_host = self.is_attached_host(arrival);
        match (self.classify(arrival, &header), from_host) {
            (Classification::ForwardGlobal, true) => self.ingress_from_host(arrival, header, now),
            (Classification::ForwardGlobal, false) => self.relay_forward(arrival, header, now),
            (Classification::ReverseAtEgress, _) => self.egress_reverse_initiate(arrival, header, now),
            (Classification::ReverseLocal, _) => self.relay_reverse(arrival, header, now),
            (Classification::Invalid, _) => Disposition::drop(Reason::NoRoute),
        }
    }

    fn swap_out(&self, toward: LocalInterval, x: Address) -> Option<Address> {
        map_out(self.eps, self.own(), toward, x).ok()
    }

    fn swap_in(&self, from: LocalInterval, y: Address) -> Option<Address> {
        map_in(self.eps, self.own(), from, y).ok()
    }

    fn alloc(&mut self, ship_in: Address, prev: NodeId, now: Tick) -> Result<Address, Disposition> {
        match self.hrt.find_or_alloc(ship_in, prev, &mut self.rng, now) {
            Ok((hip, _)) => Ok(hip),
            Err(TableError::HrtExhausted(_)) => Err(Disposition::drop(Reason::TableExhausted)),
            Err(TableError::OutsideInterval { .. }) => Err(Disposition::bad_provenance(prev)),
        }
    }

    fn record_egress(&mut self, origin: Address, hip: Address, now: Tick) -> Upsert {
        // Both values were checked against the own interval by the caller.
        self.drt.upsert(origin, hip, now).unwrap_or(Upsert::Refreshed)
    }

    /// Datagram from an attached host toward a global destination.
    pub fn ingress_from_host(&mut self, host: NodeId, header: Header, now: Tick) -> Disposition {
        if self.host_address(host) != Some(header.src) || !self.own().contains(header.src) {
            return Disposition::bad_provenance(host);
        }
        let Some((_, next, distance)) = fib_lookup(&self.fib, header.dst) else {
            return Disposition::drop(Reason::NoRoute);
        };
        match next {
            NextHop::Local => {
                let Some(&server) = self.host_by_addr.get(&header.dst) else {
                    return Disposition::drop(Reason::NoRoute);
                };
                let hip = match self.alloc(header.src, host, now) {
                    Ok(h) => h,
                    Err(d) => return d,
                };
                self.record_egress(header.src, hip, now);
                Disposition::Deliver {
                    host: server,
                    header: Header { src: header.src, dst: header.dst, ttl: distance, origin: header.src },
                }
            }
            NextHop::Node(n) => {
                let Some(toward) = self.list.neighbor(n) else {
                    return Disposition::drop(Reason::NoRoute);
                };
                let hip = match self.alloc(header.src, host, now) {
                    Ok(h) => h,
                    Err(d) => return d,
                };
                match (self.swap_out(toward, hip), self.swap_out(toward, header.src)) {
                    (Some(src), Some(origin)) => {
                        Disposition::Forward { to: n, header: Header { src, dst: header.dst, ttl: distance, origin } }
                    }
                    _ => Disposition::drop(Reason::NoRoute),
                }
            }
        }
    }

    /// Forward datagram from neighbor `from`; hands off to the egress path
    /// when the best-match prefix is attached here.
    pub fn relay_forward(&mut self, from: NodeId, header: Header, now: Tick) -> Disposition {
        let own = self.own();
        if !own.contains(header.src) || !own.contains(header.origin) {
            return Disposition::bad_provenance(from);
        }
        let Some((_, next, distance)) = fib_lookup(&self.fib, header.dst) else {
            return Disposition::drop(Reason::NoRoute);
        };
        let TfrDecision::Accept { new_ttl } = tfr_accept(distance, header.ttl) else {
            return Disposition::drop(Reason::TfrReject);
        };
        let n = match next {
            NextHop::Local => return self.egress_deliver(from, header, new_ttl, now),
            NextHop::Node(n) => n,
        };
        let Some(toward) = self.list.neighbor(n) else {
            return Disposition::drop(Reason::NoRoute);
        };
        let hip = match self.alloc(header.src, from, now) {
            Ok(h) => h,
            Err(d) => return d,
        };
        match (self.swap_out(toward, hip), self.swap_out(toward, header.origin)) {
            (Some(src), Some(origin)) => {
                Disposition::Forward { to: n, header: Header { src, dst: header.dst, ttl: new_ttl, origin } }
            }
            _ => Disposition::drop(Reason::NoRoute),
        }
    }

    /// Last hop of a forward datagram. Records the origin ID in the DRT and
    /// installs an HRT entry so the DRT index resolves to a reverse next hop.
    pub fn egress_deliver(&mut self, from: NodeId, header: Header, ttl: Hops, now: Tick) -> Disposition {
        let own = self.own();
        if !own.contains(header.src) || !own.contains(header.origin) {
            return Disposition::bad_provenance(from);
        }
        let Some(&server) = self.host_by_addr.get(&header.dst) else {
            return Disposition::drop(Reason::NoRoute);
        };
        let hip = match self.alloc(header.src, from, now) {
            Ok(h) => h,
            Err(d) => return d,
        };
        self.record_egress(header.origin, hip, now);
        Disposition::Deliver {
            host: server,
            header: Header { src: header.origin, dst: header.dst, ttl, origin: header.origin },
        }
    }

    /// Reply from an attached server addressed to an origin ID.
    pub fn egress_reverse_initiate(&mut self, server: NodeId, header: Header, now: Tick) -> Disposition {
        if self.host_address(server) != Some(header.src) {
            return Disposition::bad_provenance(server);
        }
        let Some(hip) = self.drt.lookup(header.dst) else {
            return Disposition::drop(Reason::NoDrtState);
        };
        let Some((prev, map)) = self.hrt.lookup(hip) else {
            return Disposition::drop(Reason::NoHrtState);
        };
        self.drt.touch(header.dst, now);
        self.hrt.touch(hip, now);
        if self.is_attached_host(prev) {
            return Disposition::Deliver {
                host: prev,
                header: Header { src: header.src, dst: header.dst, ttl: self.reverse_ttl, origin: header.dst },
            };
        }
        Disposition::Forward {
            to: prev,
            header: Header { src: header.src, dst: map, ttl: self.reverse_ttl, origin: header.dst },
        }
    }

    /// Reply arriving from neighbor `from` with a destination in that
    /// neighbor's interval.
    pub fn relay_reverse(&mut self, from: NodeId, header: Header, now: Tick) -> Disposition {
        let Some(from_iv) = self.list.neighbor(from) else {
            return Disposition::drop(Reason::NoRoute);
        };
        let (Some(idx), Some(origin)) = (self.swap_in(from_iv, header.dst), self.swap_in(from_iv, header.origin))
        else {
            return Disposition::bad_provenance(from);
        };
        let Some((prev, map)) = self.hrt.lookup(idx) else {
            return Disposition::drop(Reason::NoHrtState);
        };
        if header.ttl <= 1 {
            return Disposition::drop(Reason::TtlExpired);
        }
        let ttl = header.ttl - 1;
        self.hrt.touch(idx, now);
        if self.is_attached_host(prev) {
            return Disposition::Deliver { host: prev, header: Header { src: header.src, dst: origin, ttl, origin } };
        }
        Disposition::Forward { to: prev, header: Header { src: header.src, dst: map, ttl, origin } }
    }

    /// Classic destination-based forwarding with TTL decrement.
    pub fn baseline_forward(&mut self, header: Header) -> Disposition {
        let Some((_, next, _)) = fib_lookup(&self.fib, header.dst) else {
            return Disposition::drop(Reason::NoRoute);
        };
        if header.ttl <= 1 {
            return Disposition::drop(Reason::TtlExpired);
        }
        let out = Header { ttl: header.ttl - 1, ..header };
        match next {
            NextHop::Local => match self.host_by_addr.get(&header.dst) {
                Some(&host) => Disposition::Deliver { host, header: out },
                None => Disposition::drop(Reason::NoRoute),
            },
            NextHop::Node(n) => Disposition::Forward { to: n, header: out },
        }
    }
}
