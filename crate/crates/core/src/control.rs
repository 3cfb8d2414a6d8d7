//! Router graph, min-hop FIB construction, and the FIB perturbations used
//! to stress loop-freedom: next-hop cycles and stale distances.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::vec::Vec;

use crate::addressing::Prefix;
use crate::ids::NodeId;
use crate::tables::{Fib, FibEntry, Hops, NextHop};

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ControlError {
    #[error("routers {0} and {1} are not adjacent")]
    NotAdjacent(NodeId, NodeId),
    #[error("a forwarding cycle needs at least two routers")]
    CycleTooShort,
    #[error("router {0} has no FIB entry for {1}")]
    UnknownEntry(NodeId, Prefix),
    #[error("unknown router {0}")]
    UnknownRouter(NodeId),
}

/// Undirected router graph plus prefix attachments.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Topology {
    adjacency: BTreeMap<NodeId, BTreeSet<NodeId>>,
    prefixes: BTreeMap<Prefix, NodeId>,
}

impl Topology {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_router(&mut self, r: NodeId) {
        self.adjacency.entry(r).or_default();
    }

    pub fn add_link(&mut self, a: NodeId, b: NodeId) {
        self.adjacency.entry(a).or_default().insert(b);
        self.adjacency.entry(b).or_default().insert(a);
    }

    /// Attaches `prefix` to `router`, replacing any earlier attachment.
    pub fn attach_prefix(&mut self, prefix: Prefix, router: NodeId) {
        self.add_router(router);
        self.prefixes.insert(prefix, router);
    }

    pub fn routers(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.adjacency.keys().copied()
    }

    pub fn neighbors(&self, r: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.adjacency.get(&r).into_iter().flat_map(|s| s.iter().copied())
    }

    pub fn adjacent(&self, a: NodeId, b: NodeId) -> bool {
        self.adjacency.get(&a).is_some_and(|s| s.contains(&b))
    }

    pub fn prefixes(&self) -> impl Iterator<Item = (Prefix, NodeId)> + '_ {
        self.prefixes.iter().map(|(p, r)| (*p, *r))
    }

    /// Hop distances from `from` to every reachable router.
    pub fn bfs(&self, from: NodeId) -> BTreeMap<NodeId, u32> {
        let mut dist = BTreeMap::new();
        if !self.adjacency.contains_key(&from) {
            return dist;
        }
        dist.insert(from, 0);
        let mut queue = VecDeque::from([from]);
        while let Some(u) = queue.pop_front() {
            let du = dist[&u];
            for v in self.neighbors(u) {
                if let alloc::collections::btree_map::Entry::Vacant(e) = dist.entry(v) {
                    e.insert(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    pub fn is_connected(&self) -> bool {
        match self.adjacency.keys().next() {
            Some(&first) => self.bfs(first).len() == self.adjacency.len(),
            None => true,
        }
    }

    /// Longest shortest path, or `None` when disconnected.
    pub fn diameter(&self) -> Option<u32> {
        let mut best = 0;
        for r in self.routers() {
            let d = self.bfs(r);
            if d.len() != self.adjacency.len() {
                return None;
            }
            best = best.max(d.values().copied().max().unwrap_or(0));
        }
        Some(best)
    }
}

/// Min-hop FIBs for every router. Ties between equally short first hops go
/// to the lowest router id. Routers that cannot reach a prefix get no
/// entry for it.
pub fn build_fibs(topology: &Topology) -> BTreeMap<NodeId, Fib> {
    let mut fibs: BTreeMap<NodeId, Fib> = topology.routers().map(|r| (r, Fib::new())).collect();
    for (prefix, home) in topology.prefixes() {
        let dist = topology.bfs(home);
        for (&r, &d) in &dist {
            let Ok(distance) = Hops::try_from(d) else { continue };
            let next_hop = if r == home {
                NextHop::Local
            } else {
                // neighbors() is ordered, so the first closer neighbor has the lowest id.
                let first = topology.neighbors(r).find(|n| dist.get(n) == Some(&(d - 1))).expect("bfs parent exists");
                NextHop::Node(first)
            };
            fibs.get_mut(&r).expect("router present").insert(FibEntry { prefix, next_hop, distance });
        }
    }
    fibs
}

/// Points each member's next hop for `prefix` at the following member,
/// wrapping around. Distances are left as they were.
pub fn inject_fib_cycle(
    fibs: &mut BTreeMap<NodeId, Fib>,
    topology: &Topology,
    cycle: &[NodeId],
    prefix: Prefix,
) -> Result<(), ControlError> {
    if cycle.len() < 2 {
        return Err(ControlError::CycleTooShort);
    }
    let pairs: Vec<(NodeId, NodeId)> =
        cycle.iter().enumerate().map(|(k, &a)| (a, cycle[(k + 1) % cycle.len()])).collect();
    for &(a, b) in &pairs {
        if !topology.adjacent(a, b) {
            return Err(ControlError::NotAdjacent(a, b));
        }
        let fib = fibs.get(&a).ok_or(ControlError::UnknownRouter(a))?;
        if fib.get(&prefix).is_none() {
            return Err(ControlError::UnknownEntry(a, prefix));
        }
    }
    for (a, b) in pairs {
        let entry = fibs.get_mut(&a).and_then(|f| f.get_mut(&prefix)).expect("checked above");
        entry.next_hop = NextHop::Node(b);
    }
    Ok(())
}

/// Replaces stored distances; all overrides are checked before any is applied.
pub fn set_stale_distances(
    fibs: &mut BTreeMap<NodeId, Fib>,
    overrides: &[(NodeId, Prefix, Hops)],
) -> Result<(), ControlError> {
    for &(r, prefix, _) in overrides {
        let fib = fibs.get(&r).ok_or(ControlError::UnknownRouter(r))?;
        if fib.get(&prefix).is_none() {
            return Err(ControlError::UnknownEntry(r, prefix));
        }
    }
    for &(r, prefix, distance) in overrides {
        fibs.get_mut(&r).and_then(|f| f.get_mut(&prefix)).expect("checked above").distance = distance;
    }
    Ok(())
}
