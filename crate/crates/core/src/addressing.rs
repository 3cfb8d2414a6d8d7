//! Address scalars, global prefixes and local intervals.
//!
//! A local interval is a half-open block `[start, start + len)` of address
//! scalars. Each router owns one and learns one per neighbor; together they
//! form its [`ListTable`]. Hop-local addresses are moved from a router's own
//! interval into a neighbor's with [`map_out`], a modular shift keyed by the
//! router's [`SecretOffset`], and moved back with [`map_in`].

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;

use crate::ids::NodeId;

/// A 32-bit address scalar.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Address(pub u32);

impl Address {
    pub fn value(self) -> u32 {
        self.0
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u32> for Address {
    fn from(v: u32) -> Self {
        Address(v)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum AddressError {
    #[error("address {addr} is not in interval {interval}")]
    NotInInterval { addr: Address, interval: LocalInterval },
    #[error("interval lengths differ ({own} vs {neighbor})")]
    LengthMismatch { own: u32, neighbor: u32 },
    #[error("interval {0} has no free address")]
    Exhausted(LocalInterval),
    #[error("secret offset {offset} is not below interval length {len}")]
    OffsetOutOfRange { offset: u32, len: u32 },
    #[error("prefix length {0} exceeds 32")]
    PrefixLength(u8),
    #[error("interval length must be positive")]
    EmptyInterval,
    #[error("interval starting at {0} wraps past the end of the address space")]
    IntervalOverflow(Address),
}

/// A global-scope prefix `base/len`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Prefix {
    base: Address,
    len: u8,
}

impl Prefix {
    /// Host bits of `base` are cleared.
    pub fn new(base: Address, len: u8) -> Result<Self, AddressError> {
        if len > 32 {
            return Err(AddressError::PrefixLength(len));
        }
        Ok(Prefix { base: Address(base.0 & Self::mask_for(len)), len })
    }

    fn mask_for(len: u8) -> u32 {
        if len == 0 {
            0
        } else {
            u32::MAX << (32 - u32::from(len))
        }
    }

    pub fn base(&self) -> Address {
        self.base
    }

    // Mask length, so there is no `is_empty`.
    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> u8 {
        self.len
    }

    pub fn mask(&self) -> u32 {
        Self::mask_for(self.len)
    }

    pub fn contains(&self, a: Address) -> bool {
        (a.0 ^ self.base.0) & self.mask() == 0
    }

    /// First and one-past-last scalar covered, as `u64` so `/0` fits.
    pub fn range(&self) -> (u64, u64) {
        let start = u64::from(self.base.0);
        (start, start + (1u64 << (32 - u32::from(self.len))))
    }
}

impl fmt::Display for Prefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.base, self.len)
    }
}

/// Half-open block of address scalars `[start, start + len)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LocalInterval {
    start: Address,
    len: u32,
}

impl LocalInterval {
    pub fn new(start: Address, len: u32) -> Result<Self, AddressError> {
        if len == 0 {
            return Err(AddressError::EmptyInterval);
        }
        if u64::from(start.0) + u64::from(len) > 1u64 << 32 {
            return Err(AddressError::IntervalOverflow(start));
        }
        Ok(LocalInterval { start, len })
    }

    pub fn start(&self) -> Address {
        self.start
    }

    // Never zero; the constructor rejects empty intervals.
    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> u32 {
        self.len
    }

    /// One past the last member, as `u64` so an interval ending at 2^32 fits.
    pub fn end(&self) -> u64 {
        u64::from(self.start.0) + u64::from(self.len)
    }

    pub fn contains(&self, a: Address) -> bool {
        interval_contains(*self, a)
    }

    pub fn overlaps(&self, other: &LocalInterval) -> bool {
        u64::from(self.start.0) < other.end() && u64::from(other.start.0) < self.end()
    }

    pub fn overlaps_prefix(&self, p: &Prefix) -> bool {
        let (ps, pe) = p.range();
        u64::from(self.start.0) < pe && ps < self.end()
    }

    pub fn covers(&self, other: &LocalInterval) -> bool {
        self.start.0 <= other.start.0 && other.end() <= self.end()
    }

    /// Offset of `a` from the interval start; caller guarantees membership.
    fn offset_of(&self, a: Address) -> u32 {
        a.0 - self.start.0
    }

    fn at(&self, offset: u32) -> Address {
        Address(self.start.0 + offset)
    }

    pub fn iter(&self) -> impl Iterator<Item = Address> + '_ {
        (0..self.len).map(move |o| self.at(o))
    }
}

impl fmt::Display for LocalInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{})", self.start, self.end())
    }
}

pub fn interval_contains(iv: LocalInterval, a: Address) -> bool {
    iv.start.0 <= a.0 && u64::from(a.0) < iv.end()
}

/// Per-router constant that keys the swap bijection. Never printed.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct SecretOffset(u32);

impl SecretOffset {
    pub fn new(epsilon: u32, interval_len: u32) -> Result<Self, AddressError> {
        if epsilon >= interval_len {
            return Err(AddressError::OffsetOutOfRange { offset: epsilon, len: interval_len });
        }
        Ok(SecretOffset(epsilon))
    }

    pub(crate) fn get(self) -> u32 {
        self.0
    }
}

impl fmt::Debug for SecretOffset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SecretOffset(<redacted>)")
    }
}

/// `y = neigh.start + ((eps + x - own.start) mod |LI|)`.
pub fn map_out(
    eps: SecretOffset,
    own: LocalInterval,
    neigh: LocalInterval,
    x: Address,
) -> Result<Address, AddressError> {
    if own.len != neigh.len {
        return Err(AddressError::LengthMismatch { own: own.len, neighbor: neigh.len });
    }
    if !own.contains(x) {
        return Err(AddressError::NotInInterval { addr: x, interval: own });
    }
    let len = u64::from(own.len);
    let shifted = (u64::from(eps.get()) + u64::from(own.offset_of(x))) % len;
    Ok(neigh.at(shifted as u32))
}

/// Inverse of [`map_out`]: the unique `x` in `own` with `map_out(x) == y`.
pub fn map_in(
    eps: SecretOffset,
    own: LocalInterval,
    neigh: LocalInterval,
    y: Address,
) -> Result<Address, AddressError> {
    if own.len != neigh.len {
        return Err(AddressError::LengthMismatch { own: own.len, neighbor: neigh.len });
    }
    if !neigh.contains(y) {
        return Err(AddressError::NotInInterval { addr: y, interval: neigh });
    }
    let len = u64::from(own.len);
    let eps = u64::from(eps.get()) % len;
    let back = (u64::from(neigh.offset_of(y)) + len - eps) % len;
    Ok(own.at(back as u32))
}

/// The `n`-th address of `iv` (0-based) that is not in `occupied`.
///
/// `occupied` must yield addresses in ascending order; members outside
/// `iv` are ignored. Caller guarantees `n < iv.len - |occupied ∩ iv|`.
pub(crate) fn nth_unoccupied(iv: LocalInterval, occupied: impl IntoIterator<Item = Address>, n: u32) -> Address {
    let mut candidate = u64::from(iv.start.0) + u64::from(n);
    for o in occupied {
        if !iv.contains(o) {
            continue;
        }
        if u64::from(o.0) <= candidate {
            candidate += 1;
        } else {
            break;
        }
    }
    debug_assert!(candidate < iv.end());
    Address(candidate as u32)
}

/// Local-interval set table: the router's own interval plus the interval
/// each neighbor announced to it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ListTable {
    pub own: LocalInterval,
    pub neighbors: BTreeMap<NodeId, LocalInterval>,
}

impl ListTable {
    pub fn new(own: LocalInterval) -> Self {
        ListTable { own, neighbors: BTreeMap::new() }
    }

    pub fn neighbor(&self, id: NodeId) -> Option<LocalInterval> {
        self.neighbors.get(&id).copied()
    }
}

/// Draws a uniformly random free address from the router's own interval
/// and marks it occupied.
pub fn assign_host_address<R: Rng + ?Sized>(
    list: &ListTable,
    occupied: &mut BTreeSet<Address>,
    rng: &mut R,
) -> Result<Address, AddressError> {
    let own = list.own;
    let used = occupied.range(own.start..).take_while(|a| own.contains(**a)).count() as u64;
    let free = u64::from(own.len) - used;
    if free == 0 {
        return Err(AddressError::Exhausted(own));
    }
    let n = rng.gen_range(0..free) as u32;
    let addr = nth_unoccupied(own, occupied.range(own.start..).copied(), n);
    occupied.insert(addr);
    Ok(addr)
}

/// First clause of the interval plan that fails.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum PlanViolation {
    #[error("interval {interval} at router {router} has length {} but the plan uses {expected}", interval.len())]
    UnequalLength { router: NodeId, interval: LocalInterval, expected: u32 },
    #[error("router {router}: interval {a} of {a_owner} overlaps interval {b} of {b_owner}")]
    Overlap { router: NodeId, a_owner: NodeId, a: LocalInterval, b_owner: NodeId, b: LocalInterval },
    #[error("interval {interval} of router {router} overlaps global prefix {prefix}")]
    PrefixOverlap { router: NodeId, interval: LocalInterval, prefix: Prefix },
    #[error("router {router} records {recorded} for neighbor {neighbor}, which announces {announced:?}")]
    NeighborMismatch { router: NodeId, neighbor: NodeId, recorded: LocalInterval, announced: Option<LocalInterval> },
    #[error("interval {interval} of router {router} lies outside the local region {region}")]
    OutsideRegion { router: NodeId, interval: LocalInterval, region: LocalInterval },
}

/// Checks, in order: (a) one common interval length, (b) per router, its own
/// and its neighbors' intervals are pairwise disjoint, (c) no interval meets
/// a global prefix, (d) each recorded neighbor interval is the neighbor's
/// own, and finally that every interval sits inside `region` when given.
pub fn validate_interval_plan(
    tables: &BTreeMap<NodeId, ListTable>,
    prefixes: &[Prefix],
    region: Option<LocalInterval>,
) -> Result<(), PlanViolation> {
    let expected = match tables.values().next() {
        Some(t) => t.own.len(),
        None => return Ok(()),
    };
    for (&router, table) in tables {
        for iv in core::iter::once(&table.own).chain(table.neighbors.values()) {
            if iv.len() != expected {
                return Err(PlanViolation::UnequalLength { router, interval: *iv, expected });
            }
        }
    }
    for (&router, table) in tables {
        let entries: Vec<(NodeId, LocalInterval)> =
            core::iter::once((router, table.own)).chain(table.neighbors.iter().map(|(k, v)| (*k, *v))).collect();
        for (i, (a_owner, a)) in entries.iter().enumerate() {
            for (b_owner, b) in &entries[i + 1..] {
                if a.overlaps(b) {
                    return Err(PlanViolation::Overlap { router, a_owner: *a_owner, a: *a, b_owner: *b_owner, b: *b });
                }
            }
        }
    }
    for (&router, table) in tables {
        for prefix in prefixes {
            if table.own.overlaps_prefix(prefix) {
                return Err(PlanViolation::PrefixOverlap { router, interval: table.own, prefix: *prefix });
            }
        }
    }
    for (&router, table) in tables {
        for (&neighbor, &recorded) in &table.neighbors {
            let announced = tables.get(&neighbor).map(|t| t.own);
            if announced != Some(recorded) {
                return Err(PlanViolation::NeighborMismatch { router, neighbor, recorded, announced });
            }
        }
    }
    if let Some(region) = region {
        for (&router, table) in tables {
            if !region.covers(&table.own) {
                return Err(PlanViolation::OutsideRegion { router, interval: table.own, region });
            }
        }
    }
    Ok(())
}
