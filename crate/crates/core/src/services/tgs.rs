use std::sync::{Arc, RwLock};

use thiserror::Error;

use crate::crypto::{Crypto, SymKey};
use crate::names::{Name, Namespace};
use crate::tickets::{
    check_expiry, open_tgt, seal_cgt, seal_token_n, CgtPlain, Expiry, Lifetimes, TicketError,
};
use crate::wire::{error_content, join_parts, ok_content, ContentObject, ErrorCode, Interest};

use super::stores::{PolicyStore, ProducerRegistry};
use super::Service;

pub const NS_CLEAR: u8 = 0x00;
pub const NS_ENCRYPTED: u8 = 0x01;

/// The namespace in an authorization request, either in clear or sealed under
/// the TGT session key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NamespaceField {
    Clear(Namespace),
    Encrypted(Vec<u8>),
}

impl NamespaceField {
    /// `flag u8 ‖ len u16 ‖ field ‖ TGT`.
    pub fn encode_request(&self, tgt: &[u8]) -> Vec<u8> {
        let (flag, field) = match self {
            NamespaceField::Clear(ns) => (NS_CLEAR, ns.to_string().into_bytes()),
            NamespaceField::Encrypted(ct) => (NS_ENCRYPTED, ct.clone()),
        };
        let mut out = vec![flag];
        out.extend(join_parts(&field, tgt));
        out
    }

    fn decode_request(payload: &[u8]) -> Option<(u8, &[u8], &[u8])> {
        let (&flag, rest) = payload.split_first()?;
        let (field, tgt) = crate::wire::split_parts(rest).ok()?;
        Some((flag, field, tgt))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AuthzError {
    #[error("no policy of {uid:?} covers {requested}")]
    NotAuthorized { uid: String, requested: Namespace },
    #[error("no producer is registered for {0}")]
    NoProducer(Namespace),
}

/// Authorization service. Checks TGTs against the policy store and issues
/// CGTs sealed for the producer serving the requested namespace.
pub struct Tgs {
    cgt_name: Name,
    k_a: SymKey,
    policies: Arc<RwLock<PolicyStore>>,
    registry: Arc<RwLock<ProducerRegistry>>,
    lifetimes: Lifetimes,
    crypto: Crypto,
}

impl Tgs {
    pub fn new(
        cgt_name: Name,
        k_a: SymKey,
        policies: Arc<RwLock<PolicyStore>>,
        registry: Arc<RwLock<ProducerRegistry>>,
        lifetimes: Lifetimes,
        crypto: Crypto,
    ) -> Self {
        Self {
            cgt_name,
            k_a,
            policies,
            registry,
            lifetimes,
            crypto,
        }
    }

    pub fn crypto(&self) -> &Crypto {
        &self.crypto
    }

    pub fn policies(&self) -> &Arc<RwLock<PolicyStore>> {
        &self.policies
    }

    pub fn registry(&self) -> &Arc<RwLock<ProducerRegistry>> {
        &self.registry
    }

    /// Succeeds iff a policy namespace of `uid` covers `requested`; returns the
    /// key of the producer whose registered namespace is the longest one
    /// covering `requested`.
    pub fn verify_policy_and_fetch_key(
        &self,
        uid: &str,
        requested: &Namespace,
    ) -> Result<SymKey, AuthzError> {
        if !self.policies.read().unwrap().allows(uid, requested) {
            return Err(AuthzError::NotAuthorized {
                uid: uid.to_owned(),
                requested: requested.clone(),
            });
        }
        self.registry
            .read()
            .unwrap()
            .longest_covering(requested)
            .map(|e| e.k_p.clone())
            .ok_or_else(|| AuthzError::NoProducer(requested.clone()))
    }

    pub fn handle(&self, interest: &Interest, now: u64) -> ContentObject {
        let reply_name = interest.name().clone();
        match self.authorize(interest, now) {
            Ok(body) => ok_content(reply_name, &body),
            Err((code, msg)) => error_content(reply_name, code, msg),
        }
    }

    fn authorize(&self, interest: &Interest, now: u64) -> Result<Vec<u8>, (ErrorCode, String)> {
        if !self.cgt_name.is_prefix_of(&interest.base_name()) {
            return Err((ErrorCode::NoContent, "not a CGT request".into()));
        }
        let (flag, field, tgt) = NamespaceField::decode_request(interest.payload())
            .ok_or((ErrorCode::TgtInvalid, "malformed authorization request".to_owned()))?;

        let tgt = open_tgt(&self.crypto, &self.k_a, tgt).map_err(|e| match e {
            TicketError::Codec(m) => (ErrorCode::TgtInvalid, m),
            other => (ErrorCode::TgtInvalid, other.to_string()),
        })?;
        if check_expiry(tgt.t1, now, self.lifetimes.skew) == Expiry::Expired {
            return Err((ErrorCode::TgtExpired, "TGT expired".into()));
        }

        let ns_text = match flag {
            NS_CLEAR => field.to_vec(),
            NS_ENCRYPTED => self
                .crypto
                .sym_decrypt(&tgt.k_cgt, field)
                .map_err(|_| (ErrorCode::TgtInvalid, "namespace not sealed under the TGT key".to_owned()))?,
            _ => return Err((ErrorCode::TgtInvalid, "unknown namespace flag".into())),
        };
        let requested = std::str::from_utf8(&ns_text)
            .ok()
            .and_then(|t| Namespace::parse(t).ok())
            .ok_or((ErrorCode::NotAuthorized, "malformed namespace".to_owned()))?;

        let k_p = self
            .verify_policy_and_fetch_key(&tgt.uid, &requested)
            .map_err(|e| (ErrorCode::NotAuthorized, e.to_string()))?;

        let k_n = self.crypto.random_key();
        let t2 = now.saturating_add(self.lifetimes.cgt);
        let cgt = seal_cgt(
            &self.crypto,
            &k_p,
            &CgtPlain {
                ns: requested,
                k_n: k_n.clone(),
                t2,
            },
        );
        let token = seal_token_n(&self.crypto, &tgt.k_cgt, &k_n, t2);
        Ok(join_parts(&cgt, &token))
    }
}

impl Service for Tgs {
    fn handle(&self, interest: &Interest, now: u64) -> ContentObject {
        Tgs::handle(self, interest, now)
    }

    fn label(&self) -> &str {
        "tgs"
    }
}
