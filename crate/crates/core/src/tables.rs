//! Per-router forwarding tables.
//!
//! - [`Fib`]: global prefix → next hop and min-hop distance.
//! - [`Hrt`]: hop-specific index → previous hop and the index that hop used.
//! - [`Drt`]: origin ID of a delivered datagram → HRT index anchoring the
//!   reverse path.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::num::NonZeroU64;

use rand::Rng;

use crate::addressing::{nth_unoccupied, Address, LocalInterval, Prefix};
use crate::ids::{NodeId, Tick};

/// Hop count carried in the TTL field and stored as a FIB distance.
pub type Hops = u8;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum TableError {
    #[error("all {0} hop-specific indices are in use")]
    HrtExhausted(u32),
    #[error("address {addr} is outside the table's interval {interval}")]
    OutsideInterval { addr: Address, interval: LocalInterval },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum NextHop {
    /// The prefix is attached to this router.
    Local,
    Node(NodeId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FibEntry {
    pub prefix: Prefix,
    pub next_hop: NextHop,
    pub distance: Hops,
}

/// Longest-prefix-match table, one entry per prefix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fib {
    by_len: Vec<BTreeMap<u32, FibEntry>>,
}

impl Default for Fib {
    fn default() -> Self {
        Fib { by_len: (0..=32).map(|_| BTreeMap::new()).collect() }
    }
}

impl Fib {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or replaces the entry for `entry.prefix`.
    pub fn insert(&mut self, entry: FibEntry) -> Option<FibEntry> {
        self.by_len[usize::from(entry.prefix.len())].insert(entry.prefix.base().0, entry)
    }

    pub fn get(&self, prefix: &Prefix) -> Option<&FibEntry> {
        self.by_len[usize::from(prefix.len())].get(&prefix.base().0)
    }

    pub fn get_mut(&mut self, prefix: &Prefix) -> Option<&mut FibEntry> {
        self.by_len[usize::from(prefix.len())].get_mut(&prefix.base().0)
    }

    pub fn remove(&mut self, prefix: &Prefix) -> Option<FibEntry> {
        self.by_len[usize::from(prefix.len())].remove(&prefix.base().0)
    }

    pub fn lookup(&self, d: Address) -> Option<&FibEntry> {
        (0..=32u8).rev().find_map(|len| {
            let mask = if len == 0 { 0 } else { u32::MAX << (32 - u32::from(len)) };
            self.by_len[usize::from(len)].get(&(d.0 & mask))
        })
    }

    pub fn len(&self) -> usize {
        self.by_len.iter().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Entries ordered by prefix.
    pub fn entries(&self) -> Vec<FibEntry> {
        let mut out: Vec<FibEntry> = self.by_len.iter().flat_map(|m| m.values().copied()).collect();
        out.sort_by_key(|e| e.prefix);
        out
    }
}

pub fn fib_lookup(fib: &Fib, d: Address) -> Option<(Prefix, NextHop, Hops)> {
    fib.lookup(d).map(|e| (e.prefix, e.next_hop, e.distance))
}

pub trait EvictIdle {
    /// Removes entries with `now - last_used > idle_limit`; returns how many.
    fn evict_idle(&mut self, now: Tick, idle_limit: NonZeroU64) -> usize;
}

fn is_idle(last_used: Tick, now: Tick, idle_limit: NonZeroU64) -> bool {
    now.saturating_sub(last_used) > idle_limit.get()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HrtEntry {
    pub hip: Address,
    pub next_hop: NodeId,
    pub map: Address,
    pub last_used: Tick,
}

/// Hop-specific routing table. Keyed by `hip`, with `(next_hop, map)` also
/// unique so each upstream flow owns exactly one index.
#[derive(Clone, Debug)]
pub struct Hrt {
    own: LocalInterval,
    by_hip: BTreeMap<Address, HrtEntry>,
    by_upstream: BTreeMap<(NodeId, Address), Address>,
    high_water: usize,
}

impl Hrt {
    pub fn new(own: LocalInterval) -> Self {
        Hrt { own, by_hip: BTreeMap::new(), by_upstream: BTreeMap::new(), high_water: 0 }
    }

    pub fn interval(&self) -> LocalInterval {
        self.own
    }

    /// Returns the index for the flow arriving from `prev` with source
    /// `ship_in`, and whether a new entry was created. The incoming value is
    /// reused as the index when free; on collision a uniformly random free
    /// index is drawn.
    pub fn find_or_alloc<R: Rng + ?Sized>(
        &mut self,
        ship_in: Address,
        prev: NodeId,
        rng: &mut R,
        now: Tick,
    ) -> Result<(Address, bool), TableError> {
        if !self.own.contains(ship_in) {
            return Err(TableError::OutsideInterval { addr: ship_in, interval: self.own });
        }
        if let Some(&hip) = self.by_upstream.get(&(prev, ship_in)) {
            self.touch(hip, now);
            return Ok((hip, false));
        }
        let hip = if !self.by_hip.contains_key(&ship_in) {
            ship_in
        } else {
            let free = u64::from(self.own.len()) - self.by_hip.len() as u64;
            if free == 0 {
                return Err(TableError::HrtExhausted(self.own.len()));
            }
            let n = rng.gen_range(0..free) as u32;
            nth_unoccupied(self.own, self.by_hip.keys().copied(), n)
        };
        self.by_hip.insert(hip, HrtEntry { hip, next_hop: prev, map: ship_in, last_used: now });
        self.by_upstream.insert((prev, ship_in), hip);
        self.high_water = self.high_water.max(self.by_hip.len());
        Ok((hip, true))
    }

    pub fn lookup(&self, hip: Address) -> Option<(NodeId, Address)> {
        self.by_hip.get(&hip).map(|e| (e.next_hop, e.map))
    }

    pub fn get(&self, hip: Address) -> Option<&HrtEntry> {
        self.by_hip.get(&hip)
    }

    pub fn touch(&mut self, hip: Address, now: Tick) {
        if let Some(e) = self.by_hip.get_mut(&hip) {
            e.last_used = e.last_used.max(now);
        }
    }

    pub fn len(&self) -> usize {
        self.by_hip.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_hip.is_empty()
    }

    pub fn high_water(&self) -> usize {
        self.high_water
    }

    pub fn iter(&self) -> impl Iterator<Item = &HrtEntry> {
        self.by_hip.values()
    }
}

impl EvictIdle for Hrt {
    fn evict_idle(&mut self, now: Tick, idle_limit: NonZeroU64) -> usize {
        let stale: Vec<HrtEntry> =
            self.by_hip.values().filter(|e| is_idle(e.last_used, now, idle_limit)).copied().collect();
        for e in &stale {
            self.by_hip.remove(&e.hip);
            self.by_upstream.remove(&(e.next_hop, e.map));
        }
        stale.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DrtEntry {
    pub origin: Address,
    pub hip: Address,
    pub last_used: Tick,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Upsert {
    Inserted,
    Refreshed,
    /// Same origin ID, different index: last writer wins.
    Overwritten {
        previous: Address,
    },
}

/// Destination routing table, keyed by origin ID.
#[derive(Clone, Debug)]
pub struct Drt {
    own: LocalInterval,
    entries: BTreeMap<Address, DrtEntry>,
    collisions: u64,
    high_water: usize,
}

impl Drt {
    pub fn new(own: LocalInterval) -> Self {
        Drt { own, entries: BTreeMap::new(), collisions: 0, high_water: 0 }
    }

    pub fn upsert(&mut self, origin: Address, hip: Address, now: Tick) -> Result<Upsert, TableError> {
        for addr in [origin, hip] {
            if !self.own.contains(addr) {
                return Err(TableError::OutsideInterval { addr, interval: self.own });
            }
        }
        let outcome = match self.entries.get(&origin) {
            None => Upsert::Inserted,
            Some(e) if e.hip == hip => Upsert::Refreshed,
            Some(e) => {
                self.collisions += 1;
                Upsert::Overwritten { previous: e.hip }
            }
        };
        self.entries.insert(origin, DrtEntry { origin, hip, last_used: now });
        self.high_water = self.high_water.max(self.entries.len());
        Ok(outcome)
    }

    pub fn lookup(&self, origin: Address) -> Option<Address> {
        self.entries.get(&origin).map(|e| e.hip)
    }

    pub fn touch(&mut self, origin: Address, now: Tick) {
        if let Some(e) = self.entries.get_mut(&origin) {
            e.last_used = e.last_used.max(now);
        }
    }

    pub fn collisions(&self) -> u64 {
        self.collisions
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn high_water(&self) -> usize {
        self.high_water
    }

    pub fn iter(&self) -> impl Iterator<Item = &DrtEntry> {
        self.entries.values()
    }
}

impl EvictIdle for Drt {
    fn evict_idle(&mut self, now: Tick, idle_limit: NonZeroU64) -> usize {
        let before = self.entries.len();
        self.entries.retain(|_, e| !is_idle(e.last_used, now, idle_limit));
        before - self.entries.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn iv(start: u32, len: u32) -> LocalInterval {
        LocalInterval::new(Address(start), len).unwrap()
    }

    fn pfx(base: u32, len: u8) -> Prefix {
        Prefix::new(Address(base), len).unwrap()
    }

    const N: NodeId = NodeId(1);
    const M: NodeId = NodeId(2);
    const P: NodeId = NodeId(3);
    const Q: NodeId = NodeId(4);

    fn limit(n: u64) -> NonZeroU64 {
        NonZeroU64::new(n).unwrap()
    }

    #[test]
    fn fib_longest_match_wins() {
        let mut fib = Fib::new();
        fib.insert(FibEntry { prefix: pfx(0x0a00_0000, 8), next_hop: NextHop::Node(N), distance: 4 });
        fib.insert(FibEntry { prefix: pfx(0x0a01_0000, 16), next_hop: NextHop::Node(M), distance: 2 });
        let hit = fib_lookup(&fib, Address(0x0a01_0203)).unwrap();
        assert_eq!(hit, (pfx(0x0a01_0000, 16), NextHop::Node(M), 2));
        let hit = fib_lookup(&fib, Address(0x0a02_0203)).unwrap();
        assert_eq!(hit.1, NextHop::Node(N));
        assert_eq!(fib_lookup(&fib, Address(0x0b00_0000)), None);
        assert_eq!(fib_lookup(&Fib::new(), Address(0)), None);
    }

    #[test]
    fn fib_default_route_and_replace() {
        let mut fib = Fib::new();
        fib.insert(FibEntry { prefix: pfx(0, 0), next_hop: NextHop::Node(N), distance: 9 });
        assert_eq!(fib.lookup(Address(u32::MAX)).unwrap().distance, 9);
        let old = fib.insert(FibEntry { prefix: pfx(0, 0), next_hop: NextHop::Local, distance: 0 });
        assert!(old.is_some());
        assert_eq!(fib.len(), 1);
    }

    #[test]
    fn hrt_reuses_incoming_index_when_free() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut hrt = Hrt::new(iv(0, 1000));
        assert_eq!(hrt.find_or_alloc(Address(15), P, &mut rng, 0), Ok((Address(15), true)));
        assert_eq!(hrt.lookup(Address(15)), Some((P, Address(15))));
    }

    #[test]
    fn hrt_collision_gets_fresh_index_and_flow_is_stable() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut hrt = Hrt::new(iv(0, 1000));
        hrt.find_or_alloc(Address(15), Q, &mut rng, 0).unwrap();
        let (hip, fresh) = hrt.find_or_alloc(Address(15), P, &mut rng, 1).unwrap();
        assert!(fresh);
        assert_ne!(hip, Address(15));
        assert!(hrt.interval().contains(hip));
        assert_eq!(hrt.lookup(hip), Some((P, Address(15))));
        assert_eq!(hrt.find_or_alloc(Address(15), P, &mut rng, 2), Ok((hip, false)));
        assert_eq!(hrt.len(), 2);
    }

    #[test]
    fn hrt_exhaustion_is_surfaced() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut hrt = Hrt::new(iv(0, 4));
        for (i, prev) in [N, M, P, Q].into_iter().enumerate() {
            hrt.find_or_alloc(Address(0), prev, &mut rng, i as Tick).unwrap();
        }
        assert_eq!(hrt.len(), 4);
        assert_eq!(hrt.find_or_alloc(Address(0), NodeId(9), &mut rng, 5), Err(TableError::HrtExhausted(4)));
        assert!(matches!(hrt.find_or_alloc(Address(4), N, &mut rng, 5), Err(TableError::OutsideInterval { .. })));
    }

    #[test]
    fn hrt_lookup_missing() {
        let hrt = Hrt::new(iv(0, 10));
        assert_eq!(hrt.lookup(Address(3)), None);
    }

    #[test]
    fn drt_upsert_outcomes() {
        let mut drt = Drt::new(iv(1000, 1000));
        assert_eq!(drt.upsert(Address(1980), Address(1005), 0), Ok(Upsert::Inserted));
        assert_eq!(drt.upsert(Address(1980), Address(1005), 1), Ok(Upsert::Refreshed));
        assert_eq!(drt.collisions(), 0);
        assert_eq!(drt.upsert(Address(1980), Address(1200), 2), Ok(Upsert::Overwritten { previous: Address(1005) }));
        assert_eq!(drt.collisions(), 1);
        assert_eq!(drt.lookup(Address(1980)), Some(Address(1200)));
        assert_eq!(drt.len(), 1);
        assert_eq!(drt.lookup(Address(1001)), None);
        assert!(drt.upsert(Address(5), Address(1005), 0).is_err());
    }

    #[test]
    fn eviction_rules() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut hrt = Hrt::new(iv(0, 100));
        hrt.find_or_alloc(Address(1), N, &mut rng, 10).unwrap();
        hrt.find_or_alloc(Address(2), N, &mut rng, 10).unwrap();
        assert_eq!(hrt.evict_idle(10, limit(1)), 0);
        hrt.touch(Address(2), 20);
        assert_eq!(hrt.evict_idle(15, limit(4)), 1);
        assert_eq!(hrt.lookup(Address(1)), None);
        // The upstream key went with it: the flow is re-created fresh.
        assert_eq!(hrt.find_or_alloc(Address(1), N, &mut rng, 16), Ok((Address(1), true)));

        let mut drt = Drt::new(iv(0, 100));
        drt.upsert(Address(3), Address(4), 0).unwrap();
        assert_eq!(drt.evict_idle(5, limit(5)), 0);
        assert_eq!(drt.evict_idle(6, limit(5)), 1);
        assert_eq!(drt.lookup(Address(3)), None);
    }

    #[test]
    fn periodic_flow_survives_ten_idle_windows() {
        let idle = 50;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut hrt = Hrt::new(iv(0, 100));
        let mut drt = Drt::new(iv(0, 100));
        let mut evicted = 0;
        for now in 0..=(10 * idle) {
            if now % (idle - 1) == 0 {
                hrt.find_or_alloc(Address(7), N, &mut rng, now).unwrap();
                drt.upsert(Address(8), Address(7), now).unwrap();
            }
            evicted += hrt.evict_idle(now, limit(idle)) + drt.evict_idle(now, limit(idle));
        }
        assert_eq!(evicted, 0);
        assert_eq!(hrt.len(), 1);
        assert_eq!(drt.len(), 1);
    }
}
