#![allow(dead_code)]

use pear_core::simnet::{HostDecl, LinkDecl, PrefixDecl, Role, RouterDecl, SendDecl, Target};
use pear_core::{Address, Prefix, Scenario};

pub const SERVER: Address = Address(0x0a00_0001);

pub fn router(name: &str, start: u32, eps: u32) -> RouterDecl {
    RouterDecl { name: name.into(), start: Address(start), eps, line: 0 }
}

pub fn link(a: &str, b: &str) -> LinkDecl {
    LinkDecl { a: a.into(), b: b.into(), line: 0 }
}

pub fn prefix(p: &str, router: &str) -> PrefixDecl {
    let (base, len) = p.split_once('/').unwrap();
    let octets: Vec<u32> = base.split('.').map(|o| o.parse().unwrap()).collect();
    let v = octets.iter().fold(0u32, |acc, o| (acc << 8) | o);
    PrefixDecl { prefix: Prefix::new(Address(v), len.parse().unwrap()).unwrap(), router: router.into(), line: 0 }
}

pub fn client(name: &str, router: &str) -> HostDecl {
    HostDecl { name: name.into(), router: router.into(), role: Role::Client, addr: None, reply: false, line: 0 }
}

pub fn server(name: &str, router: &str, addr: Address, reply: bool) -> HostDecl {
    HostDecl { name: name.into(), router: router.into(), role: Role::Server, addr: Some(addr), reply, line: 0 }
}

pub fn send(tick: u64, host: &str, dst: &str) -> SendDecl {
    SendDecl { tick, host: host.into(), dst: Target::Host(dst.into()), payload: "x".into(), line: 0 }
}

/// Five routers: clients g behind q and h behind p share ingress i; the
/// server d sits behind y, two hops further.
pub fn two_flows(seed: u64) -> Scenario {
    let mut sc = Scenario::new(1000);
    sc.seed = seed;
    sc.routers = vec![
        router("p", 2000, 7),
        router("i", 0, 10),
        router("n", 4000, 955),
        router("y", 6000, 321),
        router("q", 8000, 3),
    ];
    sc.links = vec![link("q", "i"), link("p", "i"), link("i", "n"), link("n", "y")];
    sc.prefixes = vec![prefix("10.0.0.0/8", "y")];
    sc.hosts = vec![client("g", "q"), client("h", "p"), server("d", "y", SERVER, true)];
    sc.traffic = vec![send(0, "g", "d"), send(10, "h", "d")];
    sc
}
