//! Forwarding plane for anonymous, loop-free datagram delivery.
//!
//! Routers announce a *local interval* of address scalars to their
//! neighbors. Every inter-router hop rewrites the source and origin-ID
//! fields of a datagram into the interval the receiving router announced,
//! using a secret modular shift. Relays keep just enough per-hop state
//! (the HRT and DRT) to send replies back over the reverse path, and a
//! TTL rule tied to FIB distances stops datagrams from ever traversing a
//! forwarding loop.
//!
//! The crate is `no_std` (it needs `alloc`). Scenario files, trace output
//! and the command-line driver live in `pear-cli`.
//!
//! Module map:
//!
//! - [`addressing`]: addresses, prefixes, local intervals, the swap bijection.
//! - [`tables`]: FIB, HRT and DRT.
//! - [`datapath`]: the per-router packet state machine.
//! - [`control`]: topology and FIB construction/perturbation.
//! - [`simnet`]: discrete-event engine, captures, metrics and traceback.

#![cfg_attr(not(any(test, feature = "std")), no_std)]

extern crate alloc;

pub mod addressing;
pub mod control;
pub mod datapath;
pub mod ids;
pub mod simnet;
pub mod tables;

pub use addressing::{Address, AddressError, ListTable, LocalInterval, Prefix, SecretOffset};
pub use datapath::{Action, Datagram, Header, Mode, Reason, VerdictRecord};
pub use ids::{NodeId, Tick, TraceId};
pub use simnet::{Scenario, World};
