use std::sync::{Arc, RwLock};

use crate::crypto::{Crypto, SymKey};
use crate::names::Name;
use crate::tickets::{seal_tgt, seal_token_cgt, seal_token_cgt_sym, Lifetimes, TgtPlain};
use crate::wire::{error_content, join_parts, ok_content, ContentObject, ErrorCode, Interest};

use super::stores::{UserAuth, UserStore};
use super::Service;

/// Authentication service. Issues a TGT sealed under `k_A` plus a token
/// carrying the same session key for the consumer.
pub struct Kas {
    tgt_name: Name,
    k_a: SymKey,
    users: Arc<RwLock<UserStore>>,
    lifetimes: Lifetimes,
    crypto: Crypto,
}

impl Kas {
    pub fn new(
        tgt_name: Name,
        k_a: SymKey,
        users: Arc<RwLock<UserStore>>,
        lifetimes: Lifetimes,
        crypto: Crypto,
    ) -> Self {
        Self {
            tgt_name,
            k_a,
            users,
            lifetimes,
            crypto,
        }
    }

    pub fn crypto(&self) -> &Crypto {
        &self.crypto
    }

    pub fn users(&self) -> &Arc<RwLock<UserStore>> {
        &self.users
    }

    pub fn handle(&self, interest: &Interest, now: u64) -> ContentObject {
        let reply_name = interest.name().clone();
        if !self.tgt_name.is_prefix_of(&interest.base_name()) {
            return error_content(reply_name, ErrorCode::NoContent, "not a TGT request");
        }
        let Ok(uid) = std::str::from_utf8(interest.payload()) else {
            return error_content(reply_name, ErrorCode::UnknownUser, "uid is not UTF-8");
        };
        let auth = self.users.read().unwrap().get(uid).cloned();
        let Some(auth) = auth else {
            return error_content(reply_name, ErrorCode::UnknownUser, format!("unknown user {uid:?}"));
        };

        let k_cgt = self.crypto.random_key();
        let t1 = now.saturating_add(self.lifetimes.tgt);
        let token = match &auth {
            UserAuth::PublicKey(pk) => seal_token_cgt(&self.crypto, pk, &k_cgt, t1),
            UserAuth::Password { key, .. } => seal_token_cgt_sym(&self.crypto, key, &k_cgt, t1),
        };
        let tgt = seal_tgt(
            &self.crypto,
            &self.k_a,
            &TgtPlain {
                uid: uid.to_owned(),
                t1,
                k_cgt,
            },
        );
        ok_content(reply_name, &join_parts(&tgt, &token))
    }
}

impl Service for Kas {
    fn handle(&self, interest: &Interest, now: u64) -> ContentObject {
        Kas::handle(self, interest, now)
    }

    fn label(&self) -> &str {
        "kas"
    }
}
