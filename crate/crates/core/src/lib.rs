//! Kerberos-style authentication, authorization and access control for
//! private content-centric networks.
//!
//! The crate is layered bottom-up: [`names`] and [`wire`] define CCN names and
//! messages, [`forwarder`] routes them, [`crypto`] and [`tickets`] provide the
//! sealed ticket structures, [`services`] implements the realm's
//! authentication, authorization and content services, [`consumer`] is the
//! transparent client, and [`harness`] wires everything into a runnable realm
//! with transports, configuration and benchmarks.

pub mod consumer;
pub mod crypto;
pub mod forwarder;
pub mod harness;
pub mod names;
pub mod services;
pub mod tickets;
pub mod wire;

pub use names::{Name, Namespace};
pub use wire::{ContentObject, ErrorCode, Interest, Message};
