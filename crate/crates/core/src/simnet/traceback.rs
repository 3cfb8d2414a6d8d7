use alloc::vec::Vec;

use super::World;
use crate::addressing::{map_in, Address};
use crate::ids::{NodeId, TraceId};

/// Where a traceback stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TracebackEnd {
    /// The host that originated the flow.
    Host(NodeId),
    /// A neighbor that is not a compliant router; the chain cannot be
    /// followed past it.
    Untrusted(NodeId),
}

/// Routers from the egress back to the ingress, then the end point.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TracebackPath {
    pub routers: Vec<NodeId>,
    pub end: TracebackEnd,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum TracebackError {
    #[error("egress {0} has no DRT entry for origin {1}")]
    NoDrtState(NodeId, Address),
    #[error("HRT chain breaks after {} router(s)", path.len())]
    BrokenChain { path: Vec<NodeId> },
    #[error("{0} is not a router")]
    NotARouter(NodeId),
    #[error("trace {0} was not delivered to a host by a router")]
    NotDelivered(TraceId),
}

impl World {
    /// Follows HRT state from `egress` back toward the source of the flow
    /// whose origin ID, as seen at `egress`, is `origin`. Each router on the
    /// chain inverts its own swap, as it would when cooperating.
    pub fn traceback(&self, egress: NodeId, origin: Address) -> Result<TracebackPath, TracebackError> {
        let router = self.router(egress).ok_or(TracebackError::NotARouter(egress))?;
        let mut hip = router.drt.lookup(origin).ok_or(TracebackError::NoDrtState(egress, origin))?;
        let mut at = router;
        let mut routers = Vec::new();
        loop {
            routers.push(at.id);
            let Some((prev, map)) = at.hrt.lookup(hip) else {
                return Err(TracebackError::BrokenChain { path: routers });
            };
            if at.is_attached_host(prev) {
                return Ok(TracebackPath { routers, end: TracebackEnd::Host(prev) });
            }
            let Some(up) = self.router(prev) else {
                return Ok(TracebackPath { routers, end: TracebackEnd::Untrusted(prev) });
            };
            let Some(toward) = up.list.neighbor(at.id) else {
                return Err(TracebackError::BrokenChain { path: routers });
            };
            hip = match map_in(up.secret(), up.own(), toward, map) {
                Ok(h) => h,
                Err(_) => return Err(TracebackError::BrokenChain { path: routers }),
            };
            if routers.len() > self.node_count() {
                return Err(TracebackError::BrokenChain { path: routers });
            }
            at = up;
        }
    }

    /// Traceback for a delivered trace, keyed by the source address the
    /// receiving host saw.
    pub fn traceback_trace(&self, id: TraceId) -> Result<TracebackPath, TracebackError> {
        let t = self.trace(id).ok_or(TracebackError::NotDelivered(id))?;
        let last = t.hops.last().ok_or(TracebackError::NotDelivered(id))?;
        if !t.delivered() || !self.is_router(last.from) {
            return Err(TracebackError::NotDelivered(id));
        }
        self.traceback(last.from, last.header.src)
    }
}
