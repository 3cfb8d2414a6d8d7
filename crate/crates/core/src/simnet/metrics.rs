use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};

use super::{Event, World};
use crate::datapath::{Action, Reason};

impl World {
    /// Counters keyed by stable names. Every key is always present.
    pub fn metrics(&self) -> BTreeMap<String, u64> {
        let mut m: BTreeMap<String, u64> = BTreeMap::new();
        let mut put = |k: String, v: u64| {
            *m.entry(k).or_insert(0) += v;
        };
        put("traces".to_string(), self.traces.len() as u64);
        put("injected".to_string(), self.traces.iter().filter(|t| !t.adversarial).count() as u64);
        put("adversarial".to_string(), self.traces.iter().filter(|t| t.adversarial).count() as u64);
        put("replies".to_string(), self.traces.iter().filter(|t| t.reply_to.is_some()).count() as u64);
        put("forwarded".to_string(), self.link_log.iter().filter(|(_, h)| self.is_router(h.from)).count() as u64);
        let (mut delivered, mut dropped) = (0, 0);
        for r in Reason::ALL {
            if r != Reason::Ok {
                put(format!("reason.{}", r.as_str()), 0);
            }
        }
        for t in &self.traces {
            if let Some(term) = t.terminal {
                match term.verdict.action {
                    Action::Dropped => {
                        dropped += 1;
                        put(format!("reason.{}", term.verdict.reason.as_str()), 1);
                    }
                    _ => delivered += 1,
                }
            }
        }
        put("delivered".to_string(), delivered);
        put("dropped".to_string(), dropped);
        put("in_flight".to_string(), self.queue.values().filter(|e| matches!(e, Event::Arrive { .. })).count() as u64);
        let loops: u64 = self.traces.iter().map(|t| t.loop_hops(|n| self.is_router_like(n))).sum();
        put("loop_hops".to_string(), loops);
        let revisits: u64 = self.traces.iter().map(|t| t.revisits(|n| self.is_router_like(n))).sum();
        put("revisits".to_string(), revisits);
        let mut collisions = 0;
        let mut evicted = 0;
        for r in self.routers() {
            collisions += r.drt.collisions();
            evicted += r.evicted;
            put(format!("hrt_high_water.{}", self.name(r.id)), r.hrt.high_water() as u64);
            put(format!("drt_high_water.{}", self.name(r.id)), r.drt.high_water() as u64);
        }
        put("drt_collisions".to_string(), collisions);
        put("evicted".to_string(), evicted);
        m
    }
}
