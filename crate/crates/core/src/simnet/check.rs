//! Invariants every run must satisfy, checked after the fact from traces.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::{Direction, Event, World};
use crate::datapath::Mode;
use crate::ids::TraceId;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub invariant: &'static str,
    pub trace: Option<TraceId>,
    pub detail: String,
}

/// Runs every check that applies to the world's mode.
pub fn check_all(world: &World) -> Vec<Violation> {
    let mut out = Vec::new();
    conservation(world, &mut out);
    if world.mode() == Mode::Tfr {
        loop_freedom(world, &mut out);
        ttl_monotonic(world, &mut out);
        scoping(world, &mut out);
        reverse_retraces_forward(world, &mut out);
    }
    out
}

/// Each trace either has a verdict or is still on a link.
pub fn conservation(world: &World, out: &mut Vec<Violation>) {
    let open = world.traces().iter().filter(|t| t.terminal.is_none()).count();
    let in_flight = world.queue.values().filter(|e| matches!(e, Event::Arrive { .. })).count();
    if open != in_flight {
        out.push(Violation {
            invariant: "conservation",
            trace: None,
            detail: format!("{open} open traces but {in_flight} datagrams in flight"),
        });
    }
}

/// No router forwards a datagram from a compliant host twice. A datagram
/// may come back to a router on a cycle once; that router must drop it.
pub fn loop_freedom(world: &World, out: &mut Vec<Violation>) {
    for t in world.traces().iter().filter(|t| !t.adversarial) {
        let n = t.loop_hops(|n| world.is_router_like(n));
        if n > 0 {
            out.push(Violation {
                invariant: "loop-freedom",
                trace: Some(t.id),
                detail: format!("{n} repeated forwards"),
            });
        }
        let back = t.revisits(|n| world.is_router_like(n));
        let dropped_there = t.terminal.is_some_and(|term| {
            term.verdict.action == crate::datapath::Action::Dropped && t.hops.last().is_some_and(|h| h.to == term.node)
        });
        if back > 1 || (back == 1 && !dropped_there) {
            out.push(Violation {
                invariant: "loop-freedom",
                trace: Some(t.id),
                detail: format!("{back} returns to a visited router, not ended by a drop there"),
            });
        }
    }
}

/// Forward TTLs emitted by routers strictly decrease along a trace.
pub fn ttl_monotonic(world: &World, out: &mut Vec<Violation>) {
    for t in world.traces().iter().filter(|t| t.direction == Direction::Forward) {
        let ttls: Vec<u8> = t.hops.iter().filter(|h| world.is_router(h.from)).map(|h| h.header.ttl).collect();
        if ttls.windows(2).any(|w| w[1] >= w[0]) {
            out.push(Violation {
                invariant: "ttl-monotonic",
                trace: Some(t.id),
                detail: format!("ttl sequence {ttls:?}"),
            });
        }
    }
}

/// Hop-local fields on a router-to-router hop lie in the receiver's interval
/// going forward and in the sender's interval going back.
pub fn scoping(world: &World, out: &mut Vec<Violation>) {
    for t in world.traces().iter().filter(|t| !t.adversarial) {
        for h in &t.hops {
            if !(world.is_router(h.from) && world.is_router(h.to)) {
                continue;
            }
            let (owner, local) = match t.direction {
                Direction::Forward => (h.to, [h.header.src, h.header.origin]),
                Direction::Reverse => (h.from, [h.header.dst, h.header.origin]),
            };
            let Some(iv) = world.interval(owner) else { continue };
            if local.iter().any(|a| !iv.contains(*a)) {
                out.push(Violation {
                    invariant: "scoping",
                    trace: Some(t.id),
                    detail: format!(
                        "hop {}->{} carries {:?} outside {iv}",
                        world.name(h.from),
                        world.name(h.to),
                        local
                    ),
                });
            }
        }
    }
}

/// Without DRT collisions, a delivered reply reaches the forward source over
/// the forward router path in reverse.
pub fn reverse_retraces_forward(world: &World, out: &mut Vec<Violation>) {
    if world.routers().any(|r| r.drt.collisions() > 0) {
        return;
    }
    for reply in world.traces().iter().filter(|t| t.delivered()) {
        let Some(fwd) = reply.reply_to.and_then(|id| world.trace(id)) else { continue };
        let mut expect = fwd.router_path(|n| world.is_router(n));
        expect.reverse();
        let got = reply.router_path(|n| world.is_router(n));
        let end = reply.terminal.map(|t| t.node);
        if got != expect || end != Some(fwd.source) {
            out.push(Violation {
                invariant: "reverse-path",
                trace: Some(reply.id),
                detail: format!("reply path {got:?} to {end:?}, forward path {expect:?} from {}", fwd.source),
            });
        }
    }
}
