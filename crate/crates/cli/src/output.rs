//! Text renderings of a finished world. Every line ends in `\n` and
//! ordering is fixed, so identical runs give identical bytes.

use std::fmt::Write as _;

use pear_core::datapath::Router;
use pear_core::simnet::Direction;
use pear_core::tables::NextHop;
use pear_core::{Action, World};

use crate::scenario_file::format_address;

/// One line per link traversal, in emission order.
pub fn trace_txt(world: &World, dotted: bool) -> String {
    let mut out = String::new();
    for (id, hop) in world.link_log() {
        let h = hop.header;
        let _ = writeln!(
            out,
            "t={} link={}->{} src={} dst={} ttl={} oid={} id={}",
            hop.tick,
            world.name(hop.from),
            world.name(hop.to),
            format_address(h.src, dotted),
            format_address(h.dst, dotted),
            h.ttl,
            format_address(h.origin, dotted),
            id
        );
    }
    out
}

/// One line per terminal event, in the order they happened.
pub fn verdicts_txt(world: &World) -> String {
    let mut out = String::new();
    for &id in world.terminal_order() {
        let Some(t) = world.trace(id) else { continue };
        let Some(term) = t.terminal else { continue };
        let dir = match t.direction {
            Direction::Forward => "forward",
            Direction::Reverse => "reverse",
        };
        let reason = match term.verdict.action {
            Action::Dropped => term.verdict.reason.as_str(),
            _ => "-",
        };
        let offending = term.verdict.offending_neighbor.map_or("-", |n| world.name(n));
        let _ = writeln!(
            out,
            "t={} id={} source={} dir={} node={} action={} reason={} offending={}",
            term.tick,
            id,
            world.name(t.source),
            dir,
            world.name(term.node),
            term.verdict.action.as_str(),
            reason,
            offending
        );
    }
    out
}

pub fn metrics_txt(world: &World) -> String {
    let mut out = String::new();
    for (k, v) in world.metrics() {
        let _ = writeln!(out, "{k}={v}");
    }
    out
}

/// Table snapshot of one router. Secret offsets are never part of it.
pub fn dump_tables(world: &World, router: &Router, dotted: bool) -> String {
    let a = |x| format_address(x, dotted);
    let mut out = String::new();
    out.push_str("[list]\nrole\trouter\tstart\tlen\n");
    let own = router.list.own;
    let _ = writeln!(out, "own\t{}\t{}\t{}", world.name(router.id), a(own.start()), own.len());
    for (n, iv) in &router.list.neighbors {
        let _ = writeln!(out, "neighbor\t{}\t{}\t{}", world.name(*n), a(iv.start()), iv.len());
    }
    out.push_str("[fib]\nprefix\tnext_hop\tdistance\n");
    for e in router.fib.entries() {
        let next = match e.next_hop {
            NextHop::Local => "local",
            NextHop::Node(n) => world.name(n),
        };
        let _ = writeln!(out, "{}/{}\t{}\t{}", a(e.prefix.base()), e.prefix.len(), next, e.distance);
    }
    out.push_str("[hrt]\nhip\tnext_hop\tmap\tlast_used\n");
    for e in router.hrt.iter() {
        let _ = writeln!(out, "{}\t{}\t{}\t{}", a(e.hip), world.name(e.next_hop), a(e.map), e.last_used);
    }
    out.push_str("[drt]\norigin\thip\tlast_used\n");
    for e in router.drt.iter() {
        let _ = writeln!(out, "{}\t{}\t{}", a(e.origin), a(e.hip), e.last_used);
    }
    out
}
