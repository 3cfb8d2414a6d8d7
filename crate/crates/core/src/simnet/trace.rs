use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use crate::datapath::{Header, VerdictRecord};
use crate::ids::{NodeId, Tick, TraceId};

/// One link traversal, as seen on the wire.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Hop {
    pub tick: Tick,
    pub from: NodeId,
    pub to: NodeId,
    pub header: Header,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// Toward a global destination.
    Forward,
    /// Toward a hop-local destination (a reply).
    Reverse,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Terminal {
    pub tick: Tick,
    pub node: NodeId,
    pub verdict: VerdictRecord,
}

/// Everything one datagram instance did.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HopTrace {
    pub id: TraceId,
    /// Host or adversary that injected it.
    pub source: NodeId,
    pub direction: Direction,
    pub adversarial: bool,
    /// Forward trace whose delivery triggered this reply.
    pub reply_to: Option<TraceId>,
    pub hops: Vec<Hop>,
    pub terminal: Option<Terminal>,
}

impl HopTrace {
    /// Nodes in visiting order, starting with the source.
    pub fn node_path(&self) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(self.hops.len() + 1);
        if let Some(first) = self.hops.first() {
            out.push(first.from);
        }
        out.extend(self.hops.iter().map(|h| h.to));
        out
    }

    /// Node path restricted to nodes accepted by `is_router`.
    pub fn router_path(&self, is_router: impl Fn(NodeId) -> bool) -> Vec<NodeId> {
        self.node_path().into_iter().filter(|n| is_router(*n)).collect()
    }

    /// Hops sent by a router that already forwarded this datagram, i.e.
    /// traversals of a forwarding loop.
    pub fn loop_hops(&self, is_router: impl Fn(NodeId) -> bool) -> u64 {
        let mut forwarded = BTreeSet::new();
        let mut count = 0;
        for h in self.hops.iter().filter(|h| is_router(h.from)) {
            if !forwarded.insert(h.from) {
                count += 1;
            }
        }
        count
    }

    /// Hops that arrive at a router this trace already visited. Unlike
    /// [`loop_hops`](Self::loop_hops) this counts a return to a router that
    /// then drops the datagram.
    pub fn revisits(&self, is_router: impl Fn(NodeId) -> bool) -> u64 {
        let mut seen = BTreeSet::new();
        let mut count = 0;
        for n in self.router_path(is_router) {
            if !seen.insert(n) {
                count += 1;
            }
        }
        count
    }

    pub fn delivered(&self) -> bool {
        self.terminal.is_some_and(|t| t.verdict.action == crate::datapath::Action::Delivered)
    }
}
