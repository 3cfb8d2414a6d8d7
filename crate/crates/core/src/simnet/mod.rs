//! Deterministic discrete-event engine.
//!
//! Links have unit latency and routers take no processing time. Events run
//! in `(tick, insertion order)`, and every random draw comes from a ChaCha
//! stream derived from the scenario seed, so a scenario and seed fully
//! determine traces, verdicts and metrics.

pub mod check;
mod metrics;
pub mod scenario;
pub mod trace;
mod traceback;

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::addressing::{
    assign_host_address, validate_interval_plan, Address, ListTable, LocalInterval, PlanViolation, Prefix, SecretOffset,
};
use crate::control::{build_fibs, inject_fib_cycle, set_stale_distances, Topology};
use crate::datapath::{Action, Disposition, Header, Mode, Reason, Router, VerdictRecord};
use crate::ids::{NodeId, Tick, TraceId};
use crate::tables::{Fib, Hops};

pub use scenario::{
    AdversaryDecl, AdversaryKind, ConfigError, Forge, HostDecl, Limits, LinkDecl, PerturbDecl, Perturbation,
    PrefixDecl, Role, RouterDecl, Scenario, SendDecl, Target,
};
pub use trace::{Direction, Hop, HopTrace, Terminal};
pub use traceback::{TracebackEnd, TracebackError, TracebackPath};

const HOST_STREAM: u64 = 0;
const ROUTER_STREAM_BASE: u64 = 1;
const ADVERSARY_STREAM_BASE: u64 = 1 << 32;
const ADVERSARY_TTL: Hops = Hops::MAX;

/// A datagram as received by a host.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Received {
    pub trace: TraceId,
    pub tick: Tick,
    pub header: Header,
    pub payload: Vec<u8>,
}

#[derive(Clone, Debug)]
struct HostState {
    router: NodeId,
    addr: Address,
    role: Role,
    reply: bool,
    received: Vec<Received>,
}

#[derive(Clone, Debug)]
struct AdversaryState {
    kind: AdversaryKind,
    attach: NodeId,
    interval: Option<LocalInterval>,
    /// Address the attach router assigned, for host adversaries.
    assigned: Option<Address>,
    target: Address,
    forge: Forge,
    capture: Option<(NodeId, NodeId)>,
    rng: ChaCha8Rng,
    fired: u32,
}

#[derive(Clone, Debug)]
enum Node {
    Router(Router),
    Host(HostState),
    Adversary(AdversaryState),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeKind {
    Router,
    Host,
    Adversary(AdversaryKind),
}

#[derive(Clone, Debug)]
enum ResolvedPerturbation {
    Cycle(Vec<NodeId>, Prefix),
    Stale(Vec<(NodeId, Prefix, Hops)>),
}

#[derive(Clone, Debug)]
enum Event {
    Send { host: NodeId, dst: Address, payload: Vec<u8>, reply_to: Option<TraceId> },
    Arrive { from: NodeId, to: NodeId, header: Header, payload: Vec<u8>, trace: TraceId },
    Perturb(usize),
    AdversaryFire(NodeId),
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum SendError {
    #[error("{0} is not a host")]
    NotAHost(NodeId),
}

/// One simulated network: topology, per-node state, the event queue and
/// everything observed so far.
#[derive(Clone, Debug)]
pub struct World {
    mode: Mode,
    seed: u64,
    limits: Limits,
    region: Option<LocalInterval>,
    names: Vec<String>,
    by_name: BTreeMap<String, NodeId>,
    nodes: Vec<Node>,
    topology: Topology,
    perturbations: Vec<ResolvedPerturbation>,
    queue: BTreeMap<(Tick, u64), Event>,
    seq: u64,
    now: Tick,
    traces: Vec<HopTrace>,
    link_log: Vec<(TraceId, Hop)>,
    terminal_order: Vec<TraceId>,
    warnings: Vec<String>,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

struct Builder {
    errors: Vec<ConfigError>,
}

impl Builder {
    fn err(&mut self, line: usize, clause: &'static str, message: String) {
        self.errors.push(ConfigError { line, clause, message });
    }
}

impl World {
    /// Resolves and validates `sc`, builds FIBs, assigns host addresses and
    /// queues the traffic script, perturbations and adversary activity.
    pub fn new(sc: &Scenario) -> Result<World, Vec<ConfigError>> {
        let mut b = Builder { errors: Vec::new() };
        let len = sc.interval_len;
        if len == 0 {
            b.err(0, "interval", "interval length must be positive".to_string());
            return Err(b.errors);
        }
        let region = match sc.region {
            Some((start, rlen)) => match LocalInterval::new(start, rlen) {
                Ok(r) => Some(r),
                Err(e) => {
                    b.err(0, "region", e.to_string());
                    None
                }
            },
            None => None,
        };

        // Node ids: routers, router adversaries, hosts, host adversaries.
        let mut names: Vec<String> = Vec::new();
        let mut by_name: BTreeMap<String, NodeId> = BTreeMap::new();
        let mut declare = |b: &mut Builder, name: &str, line: usize| -> NodeId {
            let id = NodeId(names.len() as u32);
            if by_name.insert(name.to_string(), id).is_some() {
                b.err(line, "reference", format!("duplicate node name `{name}`"));
            }
            names.push(name.to_string());
            id
        };
        let router_ids: Vec<NodeId> = sc.routers.iter().map(|r| declare(&mut b, &r.name, r.line)).collect();
        let adv_router_decls: Vec<&AdversaryDecl> = sc.adversaries.iter().filter(|a| a.kind.is_router()).collect();
        let adv_router_ids: Vec<NodeId> = adv_router_decls.iter().map(|a| declare(&mut b, &a.name, a.line)).collect();
        let host_ids: Vec<NodeId> = sc.hosts.iter().map(|h| declare(&mut b, &h.name, h.line)).collect();
        let adv_host_decls: Vec<&AdversaryDecl> = sc.adversaries.iter().filter(|a| !a.kind.is_router()).collect();
        let adv_host_ids: Vec<NodeId> = adv_host_decls.iter().map(|a| declare(&mut b, &a.name, a.line)).collect();
        let compliant: BTreeSet<NodeId> = router_ids.iter().copied().collect();

        let resolve_router = |b: &mut Builder, name: &str, line: usize| -> Option<NodeId> {
            match by_name.get(name) {
                Some(id) if compliant.contains(id) => Some(*id),
                Some(_) => {
                    b.err(line, "reference", format!("`{name}` is not a router"));
                    None
                }
                None => {
                    b.err(line, "reference", format!("unknown router `{name}`"));
                    None
                }
            }
        };

        // Intervals and secrets.
        let mut own: BTreeMap<NodeId, LocalInterval> = BTreeMap::new();
        let mut secrets: BTreeMap<NodeId, SecretOffset> = BTreeMap::new();
        for (decl, &id) in sc.routers.iter().zip(&router_ids) {
            match LocalInterval::new(decl.start, len) {
                Ok(iv) => {
                    own.insert(id, iv);
                }
                Err(e) => b.err(decl.line, "interval", format!("router `{}`: {e}", decl.name)),
            }
            match SecretOffset::new(decl.eps, len) {
                Ok(s) => {
                    secrets.insert(id, s);
                }
                Err(e) => b.err(decl.line, "interval", format!("router `{}`: {e}", decl.name)),
            }
        }
        for (decl, &id) in adv_router_decls.iter().zip(&adv_router_ids) {
            match decl.interval_start.map(|s| LocalInterval::new(s, len)) {
                Some(Ok(iv)) => {
                    own.insert(id, iv);
                }
                Some(Err(e)) => b.err(decl.line, "interval", format!("adversary `{}`: {e}", decl.name)),
                None => b.err(decl.line, "adversary", format!("router adversary `{}` needs an interval", decl.name)),
            }
        }

        // Links.
        let mut topology = Topology::new();
        for &r in &router_ids {
            topology.add_router(r);
        }
        let mut adjacency: BTreeMap<NodeId, BTreeSet<NodeId>> = BTreeMap::new();
        for link in &sc.links {
            let a = resolve_router(&mut b, &link.a, link.line);
            let c = resolve_router(&mut b, &link.b, link.line);
            if let (Some(a), Some(c)) = (a, c) {
                if a == c {
                    b.err(link.line, "topology", format!("self-link on `{}`", link.a));
                    continue;
                }
                topology.add_link(a, c);
                adjacency.entry(a).or_default().insert(c);
                adjacency.entry(c).or_default().insert(a);
            }
        }
        let mut adv_attach: BTreeMap<NodeId, NodeId> = BTreeMap::new();
        for (decl, &id) in adv_router_decls.iter().zip(&adv_router_ids) {
            if let Some(r) = resolve_router(&mut b, &decl.attach, decl.line) {
                adv_attach.insert(id, r);
                adjacency.entry(r).or_default().insert(id);
                adjacency.entry(id).or_default().insert(r);
            }
        }

        // Prefixes.
        let mut prefix_home: BTreeMap<Prefix, NodeId> = BTreeMap::new();
        for p in &sc.prefixes {
            if let Some(r) = resolve_router(&mut b, &p.router, p.line) {
                if prefix_home.insert(p.prefix, r).is_some() {
                    b.err(p.line, "topology", format!("prefix {} attached more than once", p.prefix));
                }
                topology.attach_prefix(p.prefix, r);
            }
        }

        // Interval plan.
        let mut lists: BTreeMap<NodeId, ListTable> = BTreeMap::new();
        for (&id, &iv) in &own {
            let mut t = ListTable::new(iv);
            for n in adjacency.get(&id).into_iter().flatten() {
                if let Some(niv) = own.get(n) {
                    t.neighbors.insert(*n, *niv);
                }
            }
            lists.insert(id, t);
        }
        if !sc.bypass_interval_validation && b.errors.is_empty() {
            let prefixes: Vec<Prefix> = prefix_home.keys().copied().collect();
            if let Err(v) = validate_interval_plan(&lists, &prefixes, region) {
                let n = |id: NodeId| names[id.index()].clone();
                let line_of = |id: NodeId| {
                    sc.routers
                        .iter()
                        .find(|r| r.name == names[id.index()])
                        .map(|r| r.line)
                        .or_else(|| sc.adversaries.iter().find(|a| a.name == names[id.index()]).map(|a| a.line))
                        .unwrap_or(0)
                };
                let (line, msg) = match v {
                    PlanViolation::UnequalLength { router, interval, expected } => (
                        line_of(router),
                        format!("interval {interval} at `{}` does not have length {expected}", n(router)),
                    ),
                    PlanViolation::Overlap { router, a_owner, a, b_owner, b: bi } => (
                        line_of(b_owner),
                        format!(
                            "at `{}`: interval {a} of `{}` overlaps interval {bi} of `{}`",
                            n(router),
                            n(a_owner),
                            n(b_owner)
                        ),
                    ),
                    PlanViolation::PrefixOverlap { router, interval, prefix } => (
                        line_of(router),
                        format!("interval {interval} of `{}` overlaps global prefix {prefix}", n(router)),
                    ),
                    PlanViolation::NeighborMismatch { router, neighbor, .. } => {
                        (line_of(router), format!("`{}` records a stale interval for `{}`", n(router), n(neighbor)))
                    }
                    PlanViolation::OutsideRegion { router, interval, region } => (
                        line_of(router),
                        format!("interval {interval} of `{}` lies outside region {region}", n(router)),
                    ),
                };
                b.err(line, "interval-plan", msg);
            }
        }
        // Disconnected graphs are legal; delivery just is not expected.
        let mut warnings = Vec::new();
        if !topology.is_connected() {
            warnings.push("router graph is not connected".to_string());
        }

        // Routers with FIBs.
        let mut fibs = build_fibs(&topology);
        let mut nodes: Vec<Option<Node>> = (0..names.len()).map(|_| None).collect();
        for &id in &router_ids {
            let (Some(list), Some(eps)) = (lists.get(&id), secrets.get(&id)) else { continue };
            let mut r = Router::new(id, list.clone(), *eps, stream_rng(sc.seed, ROUTER_STREAM_BASE + u64::from(id.0)));
            r.fib = fibs.get(&id).cloned().unwrap_or_default();
            r.reverse_ttl = sc.limits.reverse_ttl;
            nodes[id.index()] = Some(Node::Router(r));
        }

        // Hosts.
        let mut host_rng = stream_rng(sc.seed, HOST_STREAM);
        let mut occupied: BTreeSet<Address> = BTreeSet::new();
        let mut server_addrs: BTreeMap<Address, NodeId> = BTreeMap::new();
        for (decl, &id) in sc.hosts.iter().zip(&host_ids) {
            let Some(r) = resolve_router(&mut b, &decl.router, decl.line) else { continue };
            let Some(Node::Router(router)) = nodes[r.index()].as_mut() else { continue };
            let addr = match (decl.role, decl.addr) {
                (Role::Client, None) => match assign_host_address(&router.list, &mut occupied, &mut host_rng) {
                    Ok(a) => a,
                    Err(e) => {
                        b.err(decl.line, "addressing", format!("host `{}`: {e}", decl.name));
                        continue;
                    }
                },
                (Role::Client, Some(_)) => {
                    b.err(decl.line, "host", format!("client `{}` gets its address from its router", decl.name));
                    continue;
                }
                (Role::Server, None) => {
                    b.err(decl.line, "host", format!("server `{}` needs a global addr", decl.name));
                    continue;
                }
                (Role::Server, Some(a)) => {
                    if !prefix_home.iter().any(|(p, home)| *home == r && p.contains(a)) {
                        b.err(
                            decl.line,
                            "host",
                            format!("server address {a} is not in a prefix attached to `{}`", decl.router),
                        );
                        continue;
                    }
                    if server_addrs.insert(a, id).is_some() {
                        b.err(decl.line, "host", format!("server address {a} used twice"));
                        continue;
                    }
                    a
                }
            };
            router.attach_host(id, addr);
            nodes[id.index()] = Some(Node::Host(HostState {
                router: r,
                addr,
                role: decl.role,
                reply: decl.reply,
                received: Vec::new(),
            }));
        }

        let resolve_target = |b: &mut Builder, t: &Target, line: usize| -> Option<Address> {
            match t {
                Target::Addr(a) => Some(*a),
                Target::Host(name) => {
                    match by_name.get(name.as_str()).and_then(|id| server_addrs.iter().find(|(_, h)| *h == id)) {
                        Some((a, _)) => Some(*a),
                        None => {
                            b.err(line, "reference", format!("`{name}` is not a server host"));
                            None
                        }
                    }
                }
            }
        };

        // Adversaries.
        let adv_decls: Vec<(&AdversaryDecl, NodeId)> = adv_router_decls
            .iter()
            .copied()
            .zip(adv_router_ids.iter().copied())
            .chain(adv_host_decls.iter().copied().zip(adv_host_ids.iter().copied()))
            .collect();
        let mut adversary_fires: Vec<(Tick, NodeId)> = Vec::new();
        for (decl, id) in adv_decls {
            let Some(attach) = resolve_router(&mut b, &decl.attach, decl.line) else { continue };
            let Some(target) = resolve_target(&mut b, &decl.target, decl.line) else { continue };
            let capture = match (&decl.kind, &decl.capture) {
                (AdversaryKind::ReplayingRouter, Some((x, y))) => {
                    match (by_name.get(x.as_str()), by_name.get(y.as_str())) {
                        (Some(&x), Some(&y)) => Some((x, y)),
                        _ => {
                            b.err(decl.line, "reference", format!("unknown capture link {x}->{y}"));
                            continue;
                        }
                    }
                }
                (AdversaryKind::ReplayingRouter, None) => {
                    b.err(decl.line, "adversary", format!("replaying router `{}` needs capture=", decl.name));
                    continue;
                }
                _ => None,
            };
            if decl.count > 1 && decl.period == 0 {
                b.err(decl.line, "adversary", "period must be positive when count > 1".to_string());
                continue;
            }
            let mut assigned = None;
            if decl.kind == AdversaryKind::SpoofingHost {
                let Some(Node::Router(router)) = nodes[attach.index()].as_mut() else { continue };
                match assign_host_address(&router.list, &mut occupied, &mut host_rng) {
                    Ok(a) => {
                        router.attach_host(id, a);
                        assigned = Some(a);
                    }
                    Err(e) => {
                        b.err(decl.line, "addressing", format!("adversary `{}`: {e}", decl.name));
                        continue;
                    }
                }
            }
            for k in 0..decl.count {
                adversary_fires.push((decl.start + Tick::from(k) * decl.period, id));
            }
            nodes[id.index()] = Some(Node::Adversary(AdversaryState {
                kind: decl.kind,
                attach,
                interval: own.get(&id).copied(),
                assigned,
                target,
                forge: decl.forge,
                capture,
                rng: stream_rng(sc.seed, ADVERSARY_STREAM_BASE + u64::from(id.0)),
                fired: 0,
            }));
        }

        // Perturbations, checked against the evolving FIB set.
        let mut perturbations = Vec::new();
        for p in &sc.perturbations {
            let resolved = match &p.kind {
                Perturbation::Cycle { routers, prefix } => {
                    let ids: Option<Vec<NodeId>> = routers.iter().map(|r| resolve_router(&mut b, r, p.line)).collect();
                    let Some(ids) = ids else { continue };
                    if let Err(e) = inject_fib_cycle(&mut fibs, &topology, &ids, *prefix) {
                        b.err(p.line, "perturbation", e.to_string());
                        continue;
                    }
                    ResolvedPerturbation::Cycle(ids, *prefix)
                }
                Perturbation::Stale { overrides } => {
                    let mut out = Vec::new();
                    for (r, prefix, d) in overrides {
                        if let Some(id) = resolve_router(&mut b, r, p.line) {
                            out.push((id, *prefix, *d));
                        }
                    }
                    if out.len() != overrides.len() {
                        continue;
                    }
                    if let Err(e) = set_stale_distances(&mut fibs, &out) {
                        b.err(p.line, "perturbation", e.to_string());
                        continue;
                    }
                    ResolvedPerturbation::Stale(out)
                }
            };
            perturbations.push((p.tick, resolved));
        }

        // Traffic.
        let mut sends = Vec::new();
        for s in &sc.traffic {
            let host = match by_name.get(s.host.as_str()) {
                Some(&id) if matches!(nodes[id.index()], Some(Node::Host(_))) => id,
                _ => {
                    b.err(s.line, "reference", format!("unknown host `{}`", s.host));
                    continue;
                }
            };
            if let Some(dst) = resolve_target(&mut b, &s.dst, s.line) {
                sends.push((s.tick, host, dst, s.payload.as_bytes().to_vec()));
            }
        }

        if !b.errors.is_empty() {
            return Err(b.errors);
        }
        let nodes: Vec<Node> = nodes.into_iter().map(|n| n.expect("every declared node is built")).collect();

        let mut world = World {
            mode: sc.mode,
            seed: sc.seed,
            limits: sc.limits.clone(),
            region,
            names,
            by_name,
            nodes,
            topology,
            perturbations: Vec::new(),
            queue: BTreeMap::new(),
            seq: 0,
            now: 0,
            traces: Vec::new(),
            link_log: Vec::new(),
            terminal_order: Vec::new(),
            warnings,
        };
        let mut ordered: Vec<(Tick, ResolvedPerturbation)> = perturbations;
        ordered.sort_by_key(|(t, _)| *t);
        for (i, (tick, p)) in ordered.into_iter().enumerate() {
            world.perturbations.push(p);
            world.schedule(tick, Event::Perturb(i));
        }
        sends.sort_by_key(|s| s.0);
        for (tick, host, dst, payload) in sends {
            world.schedule(tick, Event::Send { host, dst, payload, reply_to: None });
        }
        adversary_fires.sort_by_key(|f| f.0);
        for (tick, id) in adversary_fires {
            world.schedule(tick, Event::AdversaryFire(id));
        }
        Ok(world)
    }

    fn schedule(&mut self, tick: Tick, event: Event) {
        self.queue.insert((tick, self.seq), event);
        self.seq += 1;
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn limits(&self) -> &Limits {
        &self.limits
    }

    pub fn now(&self) -> Tick {
        self.now
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn name(&self, id: NodeId) -> &str {
        &self.names[id.index()]
    }

    pub fn node_id(&self, name: &str) -> Option<NodeId> {
        self.by_name.get(name).copied()
    }

    pub fn kind(&self, id: NodeId) -> NodeKind {
        match &self.nodes[id.index()] {
            Node::Router(_) => NodeKind::Router,
            Node::Host(_) => NodeKind::Host,
            Node::Adversary(a) => NodeKind::Adversary(a.kind),
        }
    }

    /// Compliant router.
    pub fn is_router(&self, id: NodeId) -> bool {
        matches!(self.nodes.get(id.index()), Some(Node::Router(_)))
    }

    /// Compliant or adversarial router.
    pub fn is_router_like(&self, id: NodeId) -> bool {
        match self.nodes.get(id.index()) {
            Some(Node::Router(_)) => true,
            Some(Node::Adversary(a)) => a.kind.is_router(),
            _ => false,
        }
    }

    pub fn router(&self, id: NodeId) -> Option<&Router> {
        match self.nodes.get(id.index()) {
            Some(Node::Router(r)) => Some(r),
            _ => None,
        }
    }

    pub fn routers(&self) -> impl Iterator<Item = &Router> {
        self.nodes.iter().filter_map(|n| match n {
            Node::Router(r) => Some(r),
            _ => None,
        })
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    /// Address a host or host adversary was assigned (or configured with).
    pub fn host_address(&self, id: NodeId) -> Option<Address> {
        match self.nodes.get(id.index()) {
            Some(Node::Host(h)) => Some(h.addr),
            Some(Node::Adversary(a)) => a.assigned,
            _ => None,
        }
    }

    pub fn host_role(&self, id: NodeId) -> Option<Role> {
        match self.nodes.get(id.index()) {
            Some(Node::Host(h)) => Some(h.role),
            _ => None,
        }
    }

    pub fn host_router(&self, id: NodeId) -> Option<NodeId> {
        match self.nodes.get(id.index()) {
            Some(Node::Host(h)) => Some(h.router),
            Some(Node::Adversary(a)) => Some(a.attach),
            _ => None,
        }
    }

    pub fn received(&self, host: NodeId) -> &[Received] {
        match self.nodes.get(host.index()) {
            Some(Node::Host(h)) => &h.received,
            _ => &[],
        }
    }

    /// Own interval of a compliant or adversarial router.
    pub fn interval(&self, id: NodeId) -> Option<LocalInterval> {
        match self.nodes.get(id.index()) {
            Some(Node::Router(r)) => Some(r.own()),
            Some(Node::Adversary(a)) => a.interval,
            _ => None,
        }
    }

    /// Whether `a` is hop-local: inside the reserved region when one is
    /// configured, otherwise inside some router's own interval.
    pub fn is_local_address(&self, a: Address) -> bool {
        match self.region {
            Some(r) => r.contains(a),
            None => (0..self.nodes.len()).any(|i| self.interval(NodeId(i as u32)).is_some_and(|iv| iv.contains(a))),
        }
    }

    pub fn traces(&self) -> &[HopTrace] {
        &self.traces
    }

    pub fn trace(&self, id: TraceId) -> Option<&HopTrace> {
        self.traces.get(id.0 as usize)
    }

    /// Every link traversal in emission order.
    pub fn link_log(&self) -> &[(TraceId, Hop)] {
        &self.link_log
    }

    /// Trace ids in the order their terminal verdicts happened.
    pub fn terminal_order(&self) -> &[TraceId] {
        &self.terminal_order
    }

    /// Headers that crossed `from -> to`, as on the wire.
    pub fn observe_link(&self, from: NodeId, to: NodeId) -> Vec<Header> {
        self.link_log.iter().filter(|(_, h)| h.from == from && h.to == to).map(|(_, h)| h.header).collect()
    }

    /// Injects a datagram from `host` at the current tick.
    pub fn host_send(&mut self, host: NodeId, dst: Address, payload: Vec<u8>) -> Result<TraceId, SendError> {
        self.send_from_host(host, dst, payload, None)
    }

    fn send_from_host(
        &mut self,
        host: NodeId,
        dst: Address,
        payload: Vec<u8>,
        reply_to: Option<TraceId>,
    ) -> Result<TraceId, SendError> {
        let Some(Node::Host(h)) = self.nodes.get(host.index()) else {
            return Err(SendError::NotAHost(host));
        };
        let (router, src) = (h.router, h.addr);
        let header = Header { src, dst, ttl: self.limits.host_ttl, origin: src };
        let id = self.open_trace(host, dst, false, reply_to);
        self.emit(id, host, router, header, payload);
        Ok(id)
    }

    fn open_trace(&mut self, source: NodeId, dst: Address, adversarial: bool, reply_to: Option<TraceId>) -> TraceId {
        let id = TraceId(self.traces.len() as u64);
        let direction = if self.is_local_address(dst) { Direction::Reverse } else { Direction::Forward };
        self.traces.push(HopTrace { id, source, direction, adversarial, reply_to, hops: Vec::new(), terminal: None });
        id
    }

    fn emit(&mut self, trace: TraceId, from: NodeId, to: NodeId, header: Header, payload: Vec<u8>) {
        let hop = Hop { tick: self.now, from, to, header };
        self.traces[trace.0 as usize].hops.push(hop);
        self.link_log.push((trace, hop));
        self.schedule(self.now + 1, Event::Arrive { from, to, header, payload, trace });
    }

    fn finish(&mut self, trace: TraceId, node: NodeId, verdict: VerdictRecord) {
        let t = &mut self.traces[trace.0 as usize];
        debug_assert!(t.terminal.is_none(), "trace {trace} terminated twice");
        t.terminal = Some(Terminal { tick: self.now, node, verdict });
        self.terminal_order.push(trace);
    }

    /// Processes every queued event with tick ≤ `until`.
    pub fn run(&mut self, until: Tick) {
        while let Some(entry) = self.queue.first_entry() {
            if entry.key().0 > until {
                break;
            }
            let ((tick, _), event) = entry.remove_entry();
            self.now = tick;
            self.dispatch(event);
        }
    }

    /// Runs to the scenario's `until` limit.
    pub fn run_to_limit(&mut self) {
        self.run(self.limits.until);
    }

    pub fn pending_events(&self) -> usize {
        self.queue.len()
    }

    fn dispatch(&mut self, event: Event) {
        match event {
            Event::Send { host, dst, payload, reply_to } => {
                // Hosts were resolved at construction.
                let _ = self.send_from_host(host, dst, payload, reply_to);
            }
            Event::Arrive { from, to, header, payload, trace } => self.arrive(from, to, header, payload, trace),
            Event::Perturb(i) => self.apply_perturbation(i),
            Event::AdversaryFire(id) => self.fire_adversary(id),
        }
    }

    fn arrive(&mut self, from: NodeId, to: NodeId, header: Header, payload: Vec<u8>, trace: TraceId) {
        let (now, mode, idle) = (self.now, self.mode, self.limits.idle_limit);
        let disposition = match &mut self.nodes[to.index()] {
            Node::Router(r) => {
                r.evict(now, idle);
                r.receive(from, header, mode, now)
            }
            Node::Host(h) => {
                h.received.push(Received { trace, tick: now, header, payload: payload.clone() });
                let echo = h.reply && self.traces[trace.0 as usize].direction == Direction::Forward;
                self.finish(
                    trace,
                    to,
                    VerdictRecord { action: Action::Delivered, reason: Reason::Ok, offending_neighbor: None },
                );
                if echo {
                    self.schedule(now, Event::Send { host: to, dst: header.src, payload, reply_to: Some(trace) });
                }
                return;
            }
            Node::Adversary(_) => {
                self.finish(
                    trace,
                    to,
                    VerdictRecord { action: Action::Delivered, reason: Reason::Ok, offending_neighbor: None },
                );
                return;
            }
        };
        match disposition {
            Disposition::Forward { to: next, header } => self.emit(trace, to, next, header, payload),
            Disposition::Deliver { host, header } => self.emit(trace, to, host, header, payload),
            Disposition::Drop(v) => self.finish(trace, to, v),
        }
    }

    fn take_fibs(&mut self) -> BTreeMap<NodeId, Fib> {
        self.nodes
            .iter_mut()
            .filter_map(|n| match n {
                Node::Router(r) => Some((r.id, core::mem::take(&mut r.fib))),
                _ => None,
            })
            .collect()
    }

    fn restore_fibs(&mut self, mut fibs: BTreeMap<NodeId, Fib>) {
        for n in &mut self.nodes {
            if let Node::Router(r) = n {
                if let Some(f) = fibs.remove(&r.id) {
                    r.fib = f;
                }
            }
        }
    }

    fn apply_perturbation(&mut self, i: usize) {
        let p = self.perturbations[i].clone();
        let mut fibs = self.take_fibs();
        // Validated against the same FIB sequence at construction.
        let _ = match &p {
            ResolvedPerturbation::Cycle(ids, prefix) => inject_fib_cycle(&mut fibs, &self.topology, ids, *prefix),
            ResolvedPerturbation::Stale(overrides) => set_stale_distances(&mut fibs, overrides),
        };
        self.restore_fibs(fibs);
    }

    fn fire_adversary(&mut self, id: NodeId) {
        let attach_own = match &self.nodes[id.index()] {
            Node::Adversary(a) => self.router(a.attach).map(|r| r.own()),
            _ => None,
        };
        let Some(attach_own) = attach_own else { return };
        let host_ttl = self.limits.host_ttl;
        let replay_source: Vec<Header> = match &self.nodes[id.index()] {
            Node::Adversary(AdversaryState { capture: Some((x, y)), .. }) => {
                let (x, y) = (*x, *y);
                self.link_log
                    .iter()
                    .filter(|(_, h)| h.from == x && h.to == y && !self.is_local_address(h.header.dst))
                    .map(|(_, h)| h.header)
                    .collect()
            }
            _ => Vec::new(),
        };
        let Node::Adversary(adv) = &mut self.nodes[id.index()] else { return };
        let k = adv.fired;
        adv.fired += 1;
        let header = match adv.kind {
            AdversaryKind::SpoofingHost => {
                let legit = adv.assigned.unwrap_or(Address(0));
                let src = match adv.forge {
                    Forge::Fixed { src, .. } => src,
                    Forge::OutOfInterval => loop {
                        let a = Address(adv.rng.gen());
                        if !attach_own.contains(a) {
                            break a;
                        }
                    },
                    Forge::InInterval => {
                        let a = attach_own.iter().nth(adv.rng.gen_range(0..attach_own.len()) as usize).unwrap_or(legit);
                        if a == legit && attach_own.len() > 1 {
                            attach_own.iter().find(|x| *x != legit).unwrap_or(legit)
                        } else {
                            a
                        }
                    }
                };
                Header { src, dst: adv.target, ttl: host_ttl, origin: src }
            }
            AdversaryKind::SpoofingRouter => {
                let pool = match adv.forge {
                    Forge::InInterval => Some(attach_own),
                    Forge::OutOfInterval => adv.interval,
                    Forge::Fixed { .. } => None,
                };
                let (src, origin) = match (adv.forge, pool) {
                    (Forge::Fixed { src, origin }, _) => (src, origin),
                    (_, Some(iv)) => {
                        let s = Address(iv.start().0 + adv.rng.gen_range(0..iv.len()));
                        let o = Address(iv.start().0 + adv.rng.gen_range(0..iv.len()));
                        (s, o)
                    }
                    (_, None) => return,
                };
                Header { src, dst: adv.target, ttl: ADVERSARY_TTL, origin }
            }
            AdversaryKind::ReplayingRouter => {
                if replay_source.is_empty() {
                    return;
                }
                replay_source[k as usize % replay_source.len()]
            }
        };
        let attach = adv.attach;
        let trace = self.open_trace(id, header.dst, true, None);
        self.emit(trace, id, attach, header, vec![]);
    }
}
