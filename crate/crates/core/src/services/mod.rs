//! Realm services: authentication (KAS), authorization (TGS) and content
//! producers.
//!
//! Every service is a request handler turning one [`Interest`] into exactly one
//! [`ContentObject`]; failures are error replies, never silence, so the
//! routers' pending-interest entries are always consumed. All replies are
//! uncacheable.

mod kas;
mod producer;
pub mod stores;
mod tgs;

use serde::{Deserialize, Serialize};

use crate::names::Name;
use crate::wire::{ContentObject, Interest};

pub use kas::Kas;
pub use producer::{
    challenge_id, increment_nonce, ChallengeTable, ContentSource, FileRepository, MemorySource, PlainProducer,
    Producer, ProducerMode, SyntheticSource, CHALLENGE_DEADLINE, KIND_CGT, KIND_CHALLENGE_REPLY,
};
pub use stores::{PolicyStore, ProducerEntry, ProducerRegistry, StoreError, UserAuth, UserStore};
pub use tgs::{AuthzError, NamespaceField, Tgs, NS_CLEAR, NS_ENCRYPTED};

/// Something that answers interests routed to it.
pub trait Service: Send + Sync {
    fn handle(&self, interest: &Interest, now: u64) -> ContentObject;

    /// Short label for logs and reports.
    fn label(&self) -> &str;
}

/// Routable names of the realm's ticket services.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RealmNames {
    pub tgt_name: Name,
    pub cgt_name: Name,
}

impl Default for RealmNames {
    fn default() -> Self {
        Self {
            tgt_name: Name::parse("/realm/TGT").unwrap(),
            cgt_name: Name::parse("/realm/CGT").unwrap(),
        }
    }
}
