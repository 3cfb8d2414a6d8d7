//! Line-oriented scenario files.
//!
//! One declaration per line, `#` starts a comment. See `docs/formats.md`
//! for the full grammar.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::num::NonZeroU64;
use std::path::Path;

use pear_core::simnet::{
    AdversaryDecl, AdversaryKind, ConfigError, Forge, HostDecl, LinkDecl, PerturbDecl, Perturbation, PrefixDecl, Role,
    RouterDecl, SendDecl, Target,
};
use pear_core::{Address, Mode, Prefix, Scenario};

pub fn parse_address(s: &str) -> Option<Address> {
    if s.contains('.') {
        s.parse::<std::net::Ipv4Addr>().ok().map(|ip| Address(u32::from(ip)))
    } else {
        s.parse::<u32>().ok().map(Address)
    }
}

pub fn parse_prefix(s: &str) -> Result<Prefix, String> {
    let (base, len) = s.split_once('/').ok_or_else(|| format!("prefix `{s}` needs /len"))?;
    let base = parse_address(base).ok_or_else(|| format!("bad prefix base `{base}`"))?;
    let len: u8 = len.parse().map_err(|_| format!("bad prefix length `{len}`"))?;
    Prefix::new(base, len).map_err(|e| e.to_string())
}

pub fn format_address(a: Address, dotted: bool) -> String {
    if dotted {
        std::net::Ipv4Addr::from(a.0).to_string()
    } else {
        a.0.to_string()
    }
}

fn format_prefix(p: Prefix) -> String {
    format!("{}/{}", format_address(p.base(), true), p.len())
}

struct Line<'a> {
    no: usize,
    positional: Vec<&'a str>,
    keys: BTreeMap<&'a str, &'a str>,
}

impl<'a> Line<'a> {
    fn split(no: usize, text: &'a str) -> Result<Self, ConfigError> {
        let mut positional = Vec::new();
        let mut keys = BTreeMap::new();
        for tok in text.split_whitespace() {
            match tok.split_once('=') {
                Some((k, v)) => {
                    if keys.insert(k, v).is_some() {
                        return Err(parse_err(no, format!("key `{k}` given twice")));
                    }
                }
                None => positional.push(tok),
            }
        }
        Ok(Line { no, positional, keys })
    }

    fn pos(&self, i: usize, what: &str) -> Result<&'a str, ConfigError> {
        self.positional.get(i).copied().ok_or_else(|| parse_err(self.no, format!("missing {what}")))
    }

    fn key(&mut self, k: &str) -> Option<&'a str> {
        self.keys.remove(k)
    }

    fn req(&mut self, k: &str) -> Result<&'a str, ConfigError> {
        self.key(k).ok_or_else(|| parse_err(self.no, format!("missing {k}=")))
    }

    fn num<T: std::str::FromStr>(&self, s: &str, what: &str) -> Result<T, ConfigError> {
        s.parse().map_err(|_| parse_err(self.no, format!("bad {what} `{s}`")))
    }

    fn addr(&self, s: &str) -> Result<Address, ConfigError> {
        parse_address(s).ok_or_else(|| parse_err(self.no, format!("bad address `{s}`")))
    }

    fn prefix(&self, s: &str) -> Result<Prefix, ConfigError> {
        parse_prefix(s).map_err(|m| parse_err(self.no, m))
    }

    fn finish(self, max_positional: usize) -> Result<(), ConfigError> {
        if let Some(k) = self.keys.keys().next() {
            return Err(parse_err(self.no, format!("unknown key `{k}`")));
        }
        if self.positional.len() > max_positional {
            return Err(parse_err(self.no, format!("unexpected `{}`", self.positional[max_positional])));
        }
        Ok(())
    }
}

fn parse_err(line: usize, message: String) -> ConfigError {
    ConfigError { line, clause: "parse", message }
}

fn target(s: &str) -> Target {
    match parse_address(s) {
        Some(a) => Target::Addr(a),
        None => Target::Host(s.to_string()),
    }
}

/// Parses scenario text. Collects one error per bad line.
pub fn parse(text: &str) -> Result<Scenario, Vec<ConfigError>> {
    let mut sc = Scenario::new(0);
    let mut errors = Vec::new();
    let mut saw_interval = false;
    let mut any = false;
    for (idx, raw) in text.lines().enumerate() {
        let no = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        any = true;
        match parse_line(&mut sc, no, content) {
            Ok(interval) => saw_interval |= interval,
            Err(e) => errors.push(e),
        }
    }
    if !any {
        errors.push(parse_err(1, "empty scenario".to_string()));
    } else if !saw_interval {
        errors.push(parse_err(1, "missing `interval_len`".to_string()));
    }
    if errors.is_empty() {
        Ok(sc)
    } else {
        Err(errors)
    }
}

fn parse_line(sc: &mut Scenario, no: usize, content: &str) -> Result<bool, ConfigError> {
    let mut l = Line::split(no, content)?;
    let kw = l.pos(0, "keyword")?;
    match kw {
        "mode" => {
            sc.mode = match l.pos(1, "mode")? {
                "tfr" => Mode::Tfr,
                "baseline" => Mode::Baseline,
                other => return Err(parse_err(no, format!("unknown mode `{other}`"))),
            };
            l.finish(2)?;
        }
        "seed" => {
            sc.seed = l.num(l.pos(1, "seed")?, "seed")?;
            l.finish(2)?;
        }
        "interval_len" => {
            sc.interval_len = l.num(l.pos(1, "length")?, "interval length")?;
            l.finish(2)?;
            return Ok(true);
        }
        "region" => {
            let start = l.addr(l.pos(1, "region start")?)?;
            let len = l.num(l.pos(2, "region length")?, "region length")?;
            sc.region = Some((start, len));
            l.finish(3)?;
        }
        "bypass_interval_validation" => {
            sc.bypass_interval_validation = match l.pos(1, "yes|no")? {
                "yes" => true,
                "no" => false,
                other => return Err(parse_err(no, format!("expected yes|no, got `{other}`"))),
            };
            l.finish(2)?;
        }
        "limits" => {
            if let Some(v) = l.key("until") {
                sc.limits.until = l.num(v, "until")?;
            }
            if let Some(v) = l.key("idle") {
                let n: u64 = l.num(v, "idle limit")?;
                sc.limits.idle_limit =
                    NonZeroU64::new(n).ok_or_else(|| parse_err(no, "idle limit must be positive".to_string()))?;
            }
            if let Some(v) = l.key("reverse_ttl") {
                sc.limits.reverse_ttl = l.num(v, "reverse ttl")?;
            }
            if let Some(v) = l.key("host_ttl") {
                sc.limits.host_ttl = l.num(v, "host ttl")?;
            }
            l.finish(1)?;
        }
        "router" => {
            let name = l.pos(1, "router name")?.to_string();
            let start = l.req("start")?;
            let start = l.addr(start)?;
            let eps = l.req("eps")?;
            let eps = l.num(eps, "eps")?;
            l.finish(2)?;
            sc.routers.push(RouterDecl { name, start, eps, line: no });
        }
        "link" => {
            let a = l.pos(1, "link end")?.to_string();
            let b = l.pos(2, "link end")?.to_string();
            l.finish(3)?;
            sc.links.push(LinkDecl { a, b, line: no });
        }
        "prefix" => {
            let prefix = l.prefix(l.pos(1, "prefix")?)?;
            let router = l.pos(2, "router")?.to_string();
            l.finish(3)?;
            sc.prefixes.push(PrefixDecl { prefix, router, line: no });
        }
        "host" => {
            let name = l.pos(1, "host name")?.to_string();
            let router = l.req("router")?.to_string();
            let role = match l.req("role")? {
                "client" => Role::Client,
                "server" => Role::Server,
                other => return Err(parse_err(no, format!("unknown role `{other}`"))),
            };
            let addr = match l.key("addr") {
                Some(a) => Some(l.addr(a)?),
                None => None,
            };
            let reply = match l.key("reply") {
                None | Some("no") => false,
                Some("yes") => true,
                Some(other) => return Err(parse_err(no, format!("expected reply=yes|no, got `{other}`"))),
            };
            l.finish(2)?;
            sc.hosts.push(HostDecl { name, router, role, addr, reply, line: no });
        }
        "send" => {
            let tick = l.num(l.pos(1, "tick")?, "tick")?;
            let host = l.pos(2, "host")?.to_string();
            let dst = target(l.pos(3, "destination")?);
            let payload = l.key("payload").unwrap_or("").to_string();
            l.finish(4)?;
            sc.traffic.push(SendDecl { tick, host, dst, payload, line: no });
        }
        "perturb" => {
            let tick = l.num(l.pos(1, "tick")?, "tick")?;
            let kind = match l.pos(2, "cycle|stale")? {
                "cycle" => {
                    let prefix = l.prefix(l.pos(3, "prefix")?)?;
                    let routers: Vec<String> = l.positional[4..].iter().map(|s| s.to_string()).collect();
                    if routers.is_empty() {
                        return Err(parse_err(no, "cycle needs routers".to_string()));
                    }
                    Perturbation::Cycle { routers, prefix }
                }
                "stale" => {
                    let mut overrides = Vec::new();
                    for item in &l.positional[3..] {
                        let mut parts = item.splitn(3, ':');
                        let (Some(r), Some(p), Some(d)) = (parts.next(), parts.next(), parts.next()) else {
                            return Err(parse_err(no, format!("expected router:prefix:distance, got `{item}`")));
                        };
                        overrides.push((r.to_string(), l.prefix(p)?, l.num(d, "distance")?));
                    }
                    Perturbation::Stale { overrides }
                }
                other => return Err(parse_err(no, format!("unknown perturbation `{other}`"))),
            };
            l.finish(usize::MAX)?;
            sc.perturbations.push(PerturbDecl { tick, kind, line: no });
        }
        "adversary" => {
            let name = l.pos(1, "adversary name")?.to_string();
            let kind = match l.req("kind")? {
                "spoofing-host" => AdversaryKind::SpoofingHost,
                "spoofing-router" => AdversaryKind::SpoofingRouter,
                "replaying-router" => AdversaryKind::ReplayingRouter,
                other => return Err(parse_err(no, format!("unknown adversary kind `{other}`"))),
            };
            let attach = l.req("attach")?.to_string();
            let interval_start = match l.key("interval") {
                Some(a) => Some(l.addr(a)?),
                None => None,
            };
            let target = target(l.req("target")?);
            let forge = match l.key("forge").unwrap_or("out") {
                "out" => Forge::OutOfInterval,
                "in" => Forge::InInterval,
                fixed => {
                    let mut parts = fixed.split(':');
                    match (parts.next(), parts.next(), parts.next(), parts.next()) {
                        (Some("fixed"), Some(s), Some(o), None) => Forge::Fixed { src: l.addr(s)?, origin: l.addr(o)? },
                        _ => return Err(parse_err(no, format!("unknown forge `{fixed}`"))),
                    }
                }
            };
            let start = match l.key("start") {
                Some(v) => l.num(v, "start")?,
                None => 0,
            };
            let period = match l.key("period") {
                Some(v) => l.num(v, "period")?,
                None => 1,
            };
            let count = match l.key("count") {
                Some(v) => l.num(v, "count")?,
                None => 1,
            };
            let capture = match l.key("capture") {
                Some(v) => match v.split_once("->") {
                    Some((x, y)) => Some((x.to_string(), y.to_string())),
                    None => return Err(parse_err(no, format!("capture expects from->to, got `{v}`"))),
                },
                None => None,
            };
            l.finish(2)?;
            sc.adversaries.push(AdversaryDecl {
                name,
                kind,
                attach,
                interval_start,
                target,
                forge,
                start,
                period,
                count,
                capture,
                line: no,
            });
        }
        other => return Err(parse_err(no, format!("unknown keyword `{other}`"))),
    }
    Ok(false)
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{}", render_errors(.0))]
    Invalid(Vec<ConfigError>),
}

/// One error per line in line order, each after the first prefixed the way
/// `main` prefixes the first.
fn render_errors(errors: &[ConfigError]) -> String {
    let mut sorted: Vec<&ConfigError> = errors.iter().collect();
    sorted.sort_by_key(|e| e.line);
    sorted.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("\nerror: ")
}

pub fn load(path: &Path) -> Result<Scenario, LoadError> {
    let text =
        std::fs::read_to_string(path).map_err(|source| LoadError::Io { path: path.display().to_string(), source })?;
    parse(&text).map_err(LoadError::Invalid)
}

/// Renders a scenario back to file syntax. `parse(&to_text(sc))` gives `sc`
/// back, minus line numbers.
pub fn to_text(sc: &Scenario) -> String {
    let mut out = String::new();
    let mode = match sc.mode {
        Mode::Tfr => "tfr",
        Mode::Baseline => "baseline",
    };
    let _ = writeln!(out, "mode {mode}");
    let _ = writeln!(out, "seed {}", sc.seed);
    let _ = writeln!(out, "interval_len {}", sc.interval_len);
    if let Some((start, len)) = sc.region {
        let _ = writeln!(out, "region {} {len}", start.0);
    }
    if sc.bypass_interval_validation {
        let _ = writeln!(out, "bypass_interval_validation yes");
    }
    let l = &sc.limits;
    let _ = writeln!(
        out,
        "limits until={} idle={} reverse_ttl={} host_ttl={}",
        l.until, l.idle_limit, l.reverse_ttl, l.host_ttl
    );
    for r in &sc.routers {
        let _ = writeln!(out, "router {} start={} eps={}", r.name, r.start.0, r.eps);
    }
    for k in &sc.links {
        let _ = writeln!(out, "link {} {}", k.a, k.b);
    }
    for p in &sc.prefixes {
        let _ = writeln!(out, "prefix {} {}", format_prefix(p.prefix), p.router);
    }
    for h in &sc.hosts {
        let _ = write!(out, "host {} router={} role={}", h.name, h.router, h.role);
        if let Some(a) = h.addr {
            let _ = write!(out, " addr={}", a.0);
        }
        if h.reply {
            let _ = write!(out, " reply=yes");
        }
        out.push('\n');
    }
    for s in &sc.traffic {
        let _ = write!(out, "send {} {} {}", s.tick, s.host, s.dst);
        if !s.payload.is_empty() {
            let _ = write!(out, " payload={}", s.payload);
        }
        out.push('\n');
    }
    for p in &sc.perturbations {
        match &p.kind {
            Perturbation::Cycle { routers, prefix } => {
                let _ = writeln!(out, "perturb {} cycle {} {}", p.tick, format_prefix(*prefix), routers.join(" "));
            }
            Perturbation::Stale { overrides } => {
                let _ = write!(out, "perturb {} stale", p.tick);
                for (r, prefix, d) in overrides {
                    let _ = write!(out, " {r}:{}:{d}", format_prefix(*prefix));
                }
                out.push('\n');
            }
        }
    }
    for a in &sc.adversaries {
        let _ = write!(out, "adversary {} kind={} attach={}", a.name, a.kind.as_str(), a.attach);
        if let Some(s) = a.interval_start {
            let _ = write!(out, " interval={}", s.0);
        }
        let forge = match a.forge {
            Forge::OutOfInterval => "out".to_string(),
            Forge::InInterval => "in".to_string(),
            Forge::Fixed { src, origin } => format!("fixed:{}:{}", src.0, origin.0),
        };
        let _ =
            write!(out, " target={} forge={forge} start={} period={} count={}", a.target, a.start, a.period, a.count);
        if let Some((x, y)) = &a.capture {
            let _ = write!(out, " capture={x}->{y}");
        }
        out.push('\n');
    }
    out
}
