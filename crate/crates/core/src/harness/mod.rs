//! Realm assembly and drivers: clocks, the face abstraction with in-process
//! and TCP transports, the router task, TOML configuration, the in-process
//! realm, benchmarks and the adversary toolkit.

pub mod adversary;
pub mod bench;
mod clock;
pub mod config;
mod link;
pub mod net;
mod realm;
mod router;
pub mod testbed;

use thiserror::Error;

use crate::consumer::ConsumerError;
use crate::services::StoreError;

pub use clock::{Clock, ManualClock, SystemClock};
pub use link::{serve, ClientTransport, CountingTransport, Endpoint};
pub use realm::{Realm, RealmOptions, ServiceSet};
pub use router::{Direction, RouterNode, Tap, Transcript, TranscriptEntry};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("E_CONFIG: {0}")]
    Config(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Consumer(#[from] ConsumerError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        HarnessError::Config(msg.into())
    }
}
