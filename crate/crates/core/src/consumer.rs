//! Transparent consumer client.
//!
//! [`Consumer::request`] classifies a name against the configured restricted
//! namespaces and, for restricted content, obtains tickets on demand:
//! cached CGT → one exchange, cached TGT only → two, nothing cached → three.
//! Mutual mode adds one challenge-response exchange.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, OnceLock};

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{password_to_key, Crypto, KdfParams, SecretKey, SymKey, SALT_LEN};
use crate::names::{Name, Namespace};
use crate::services::{
    challenge_id, increment_nonce, NamespaceField, ProducerMode, RealmNames, KIND_CGT,
    KIND_CHALLENGE_REPLY,
};
use crate::tickets::{open_token_cgt, open_token_cgt_sym, open_token_n, DEFAULT_SKEW};
use crate::wire::{
    attach_payload_with, decode_reply, split_parts, ContentObject, ErrorCode, ErrorPayload,
    Interest, PayloadDigest, WireError,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("E_TIMEOUT: no reply before the deadline")]
    Timeout,
    #[error("transport closed")]
    Closed,
    #[error("transport failure: {0}")]
    Io(String),
}

/// One interest out, the matching content object back.
#[async_trait]
pub trait Transport: Send + Sync {
    async fn exchange(&self, interest: Interest) -> Result<ContentObject, TransportError>;
}

#[async_trait]
impl<T: Transport + ?Sized> Transport for Arc<T> {
    async fn exchange(&self, interest: Interest) -> Result<ContentObject, TransportError> {
        (**self).exchange(interest).await
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConsumerError {
    #[error(transparent)]
    Service(#[from] ErrorPayload),
    #[error("E_AUTH_FAIL: reply did not open under the expected key")]
    AuthFail,
    #[error("E_TIMEOUT: no reply before the deadline")]
    Timeout,
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("credentials unusable: {0}")]
    Credentials(String),
}

impl ConsumerError {
    pub fn code(&self) -> Option<ErrorCode> {
        match self {
            ConsumerError::Service(e) => Some(e.code),
            _ => None,
        }
    }
}

impl From<TransportError> for ConsumerError {
    fn from(e: TransportError) -> Self {
        match e {
            TransportError::Timeout => ConsumerError::Timeout,
            other => ConsumerError::Transport(other.to_string()),
        }
    }
}

impl From<WireError> for ConsumerError {
    fn from(e: WireError) -> Self {
        ConsumerError::Protocol(e.to_string())
    }
}

#[derive(Clone)]
pub enum Credentials {
    SecretKey(SecretKey),
    /// The salt and cost parameters must match the user's KAS record.
    Password {
        password: String,
        salt: [u8; SALT_LEN],
        params: KdfParams,
    },
}

impl std::fmt::Debug for Credentials {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Credentials::SecretKey(_) => f.write_str("Credentials::SecretKey(..)"),
            Credentials::Password { params, .. } => write!(f, "Credentials::Password({params})"),
        }
    }
}

/// One restricted content prefix and the namespace to request a CGT for.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RestrictedNamespace {
    pub prefix: Namespace,
    pub request: Namespace,
    #[serde(default)]
    pub mode: ProducerMode,
}

impl RestrictedNamespace {
    pub fn new(prefix: Namespace) -> Self {
        Self {
            request: prefix.clone(),
            prefix,
            mode: ProducerMode::Plain,
        }
    }

    pub fn mutual(mut self) -> Self {
        self.mode = ProducerMode::Mutual;
        self
    }
}

#[derive(Debug, Clone)]
pub struct RealmClientConfig {
    pub uid: String,
    pub credentials: Credentials,
    pub names: RealmNames,
    pub restricted: Vec<RestrictedNamespace>,
    pub skew: u64,
    /// Send the requested namespace sealed under the TGT session key.
    pub encrypt_namespace: bool,
    pub digest: PayloadDigest,
}

impl RealmClientConfig {
    pub fn new(uid: impl Into<String>, credentials: Credentials) -> Self {
        Self {
            uid: uid.into(),
            credentials,
            names: RealmNames::default(),
            restricted: Vec::new(),
            skew: DEFAULT_SKEW,
            encrypt_namespace: false,
            digest: PayloadDigest::default(),
        }
    }

    pub fn restrict(mut self, entry: RestrictedNamespace) -> Self {
        self.restricted.push(entry);
        self
    }
}

/// Configured entry with the longest prefix matching `name`.
pub fn select_namespace<'a>(name: &Name, config: &'a RealmClientConfig) -> Option<&'a RestrictedNamespace> {
    config
        .restricted
        .iter()
        .filter(|r| r.prefix.matches(name))
        .max_by_key(|r| r.prefix.prefix().len())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TgtEntry {
    pub tgt: Vec<u8>,
    pub t1: u64,
    pub k_cgt: SymKey,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CgtEntry {
    pub cgt: Vec<u8>,
    pub t2: u64,
    pub k_n: SymKey,
}

/// Usable iff `now + skew <= expiry`.
fn usable(expiry: u64, now: u64, skew: u64) -> bool {
    now.saturating_add(skew) <= expiry
}

#[derive(Debug, Default, Clone)]
pub struct TicketCache {
    pub tgt: Option<TgtEntry>,
    pub cgts: HashMap<Namespace, CgtEntry>,
}

impl TicketCache {
    pub fn valid_tgt(&self, now: u64, skew: u64) -> Option<&TgtEntry> {
        self.tgt.as_ref().filter(|t| usable(t.t1, now, skew))
    }

    pub fn valid_cgt(&self, ns: &Namespace, now: u64, skew: u64) -> Option<&CgtEntry> {
        self.cgts.get(ns).filter(|c| usable(c.t2, now, skew))
    }
}

/// Per-phase exchange counts for one consumer.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExchangeCounts {
    pub authentication: u64,
    pub authorization: u64,
    pub content: u64,
    pub challenge: u64,
    pub plain: u64,
}

impl ExchangeCounts {
    pub fn total(&self) -> u64 {
        self.authentication + self.authorization + self.content + self.challenge + self.plain
    }
}

impl std::ops::Sub for ExchangeCounts {
    type Output = Self;

    fn sub(self, rhs: Self) -> Self {
        Self {
            authentication: self.authentication - rhs.authentication,
            authorization: self.authorization - rhs.authorization,
            content: self.content - rhs.content,
            challenge: self.challenge - rhs.challenge,
            plain: self.plain - rhs.plain,
        }
    }
}

#[derive(Debug, Default)]
struct Counters {
    authentication: AtomicU64,
    authorization: AtomicU64,
    content: AtomicU64,
    challenge: AtomicU64,
    plain: AtomicU64,
}

#[derive(Clone, Copy)]
enum Phase {
    Authentication,
    Authorization,
    Content,
    Challenge,
    Plain,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Flight {
    Tgt,
    Cgt(Namespace),
}

pub struct Consumer {
    config: RealmClientConfig,
    transport: Arc<dyn Transport>,
    crypto: Crypto,
    cache: Mutex<TicketCache>,
    flights: Mutex<HashMap<Flight, Arc<tokio::sync::Mutex<()>>>>,
    counters: Counters,
    password_key: OnceLock<SymKey>,
}

impl Consumer {
    pub fn new(config: RealmClientConfig, transport: Arc<dyn Transport>, crypto: Crypto) -> Self {
        Self {
            config,
            transport,
            crypto,
            cache: Mutex::new(TicketCache::default()),
            flights: Mutex::new(HashMap::new()),
            counters: Counters::default(),
            password_key: OnceLock::new(),
        }
    }

    pub fn config(&self) -> &RealmClientConfig {
        &self.config
    }

    pub fn crypto(&self) -> &Crypto {
        &self.crypto
    }

    pub fn cache(&self) -> TicketCache {
        self.cache.lock().unwrap().clone()
    }

    pub fn forget_cgt(&self, ns: &Namespace) {
        self.cache.lock().unwrap().cgts.remove(ns);
    }

    pub fn forget_tgt(&self) {
        self.cache.lock().unwrap().tgt = None;
    }

    pub fn clear_cache(&self) {
        *self.cache.lock().unwrap() = TicketCache::default();
    }

    pub fn exchanges(&self) -> ExchangeCounts {
        let c = &self.counters;
        ExchangeCounts {
            authentication: c.authentication.load(Ordering::Relaxed),
            authorization: c.authorization.load(Ordering::Relaxed),
            content: c.content.load(Ordering::Relaxed),
            challenge: c.challenge.load(Ordering::Relaxed),
            plain: c.plain.load(Ordering::Relaxed),
        }
    }

    /// Every secret the consumer holds: `sk_C` or the password key, `k_CGT`
    /// and all cached `k_N`.
    pub fn secrets(&self) -> Vec<Vec<u8>> {
        let mut out = Vec::new();
        match &self.config.credentials {
            Credentials::SecretKey(sk) => out.push(sk.as_bytes().to_vec()),
            Credentials::Password { .. } => {
                if let Some(k) = self.password_key.get() {
                    out.push(k.as_bytes().to_vec());
                }
            }
        }
        let cache = self.cache.lock().unwrap();
        if let Some(t) = &cache.tgt {
            out.push(t.k_cgt.as_bytes().to_vec());
        }
        out.extend(cache.cgts.values().map(|c| c.k_n.as_bytes().to_vec()));
        out
    }

    pub fn select_namespace(&self, name: &Name) -> Option<&RestrictedNamespace> {
        select_namespace(name, &self.config)
    }

    /// Fetches `name`, running whichever protocol phases the cache requires.
    pub async fn request(&self, name: &Name, now: u64) -> Result<Vec<u8>, ConsumerError> {
        match self.select_namespace(name) {
            None => self.plain(name).await,
            Some(entry) => {
                let entry = entry.clone();
                self.restricted(name, &entry.request, entry.mode, now).await
            }
        }
    }

    /// As [`Self::request`], always running the challenge-response round.
    pub async fn request_mutual(&self, name: &Name, now: u64) -> Result<Vec<u8>, ConsumerError> {
        let entry = self
            .select_namespace(name)
            .cloned()
            .ok_or_else(|| ConsumerError::Protocol(format!("{name} is not in a restricted namespace")))?;
        self.restricted(name, &entry.request, ProducerMode::Mutual, now).await
    }

    async fn plain(&self, name: &Name) -> Result<Vec<u8>, ConsumerError> {
        let reply = self.exchange(Phase::Plain, Interest::new(name.clone())).await?;
        Ok(reply.payload)
    }

    async fn restricted(
        &self,
        name: &Name,
        ns: &Namespace,
        mode: ProducerMode,
        now: u64,
    ) -> Result<Vec<u8>, ConsumerError> {
        let cgt = self.ensure_cgt(ns, now).await?;
        match self.retrieve(name, &cgt, mode).await {
            Err(ConsumerError::Service(e)) if e.code == ErrorCode::CgtExpired => {
                self.drop_cgt(ns, &cgt);
                let cgt = self.ensure_cgt(ns, now).await?;
                self.retrieve(name, &cgt, mode).await
            }
            other => other,
        }
    }

    async fn retrieve(&self, name: &Name, cgt: &CgtEntry, mode: ProducerMode) -> Result<Vec<u8>, ConsumerError> {
        let mut payload = Vec::with_capacity(1 + cgt.cgt.len());
        payload.push(KIND_CGT);
        payload.extend_from_slice(&cgt.cgt);
        let interest = attach_payload_with(name, payload, self.config.digest)?;
        let reply = self.exchange(Phase::Content, interest).await?;
        let body = reply_body(&reply)?;

        let sealed = match mode {
            ProducerMode::Plain => body.to_vec(),
            ProducerMode::Mutual => {
                let n1: [u8; 32] = self
                    .crypto
                    .sym_decrypt(&cgt.k_n, body)
                    .map_err(|_| ConsumerError::AuthFail)?
                    .try_into()
                    .map_err(|_| ConsumerError::Protocol("producer did not send a challenge".into()))?;
                let answer = self.crypto.sym_encrypt(&cgt.k_n, &increment_nonce(&n1));
                let mut payload = Vec::with_capacity(1 + 32 + answer.len());
                payload.push(KIND_CHALLENGE_REPLY);
                payload.extend_from_slice(&challenge_id(body));
                payload.extend_from_slice(&answer);
                let interest = attach_payload_with(name, payload, self.config.digest)?;
                let reply = self.exchange(Phase::Challenge, interest).await?;
                reply_body(&reply)?.to_vec()
            }
        };
        self.crypto
            .sym_decrypt(&cgt.k_n, &sealed)
            .map_err(|_| ConsumerError::AuthFail)
    }

    fn flight(&self, key: Flight) -> Arc<tokio::sync::Mutex<()>> {
        self.flights.lock().unwrap().entry(key).or_default().clone()
    }

    fn drop_cgt(&self, ns: &Namespace, stale: &CgtEntry) {
        let mut cache = self.cache.lock().unwrap();
        if cache.cgts.get(ns) == Some(stale) {
            cache.cgts.remove(ns);
        }
    }

    async fn ensure_cgt(&self, ns: &Namespace, now: u64) -> Result<CgtEntry, ConsumerError> {
        let flight = self.flight(Flight::Cgt(ns.clone()));
        let _guard = flight.lock().await;
        if let Some(c) = self.cache.lock().unwrap().valid_cgt(ns, now, self.config.skew) {
            return Ok(c.clone());
        }
        let tgt = self.ensure_tgt(now).await?;
        match self.authorize_with(ns, &tgt).await {
            Err(ConsumerError::Service(e)) if e.code == ErrorCode::TgtExpired => {
                {
                    let mut cache = self.cache.lock().unwrap();
                    if cache.tgt.as_ref() == Some(&tgt) {
                        cache.tgt = None;
                    }
                }
                let tgt = self.authenticate_locked(now).await?;
                self.authorize_with(ns, &tgt).await
            }
            other => other,
        }
    }

    async fn ensure_tgt(&self, now: u64) -> Result<TgtEntry, ConsumerError> {
        let flight = self.flight(Flight::Tgt);
        let _guard = flight.lock().await;
        if let Some(t) = self.cache.lock().unwrap().valid_tgt(now, self.config.skew) {
            return Ok(t.clone());
        }
        self.run_authentication().await
    }

    async fn authenticate_locked(&self, now: u64) -> Result<TgtEntry, ConsumerError> {
        let flight = self.flight(Flight::Tgt);
        let _guard = flight.lock().await;
        if let Some(t) = self.cache.lock().unwrap().valid_tgt(now, self.config.skew) {
            return Ok(t.clone());
        }
        self.run_authentication().await
    }

    /// Runs the authentication phase unconditionally and caches the TGT.
    pub async fn authenticate(&self, _now: u64) -> Result<TgtEntry, ConsumerError> {
        let flight = self.flight(Flight::Tgt);
        let _guard = flight.lock().await;
        self.run_authentication().await
    }

    /// Runs the authorization phase for `ns` with the cached TGT, obtaining
    /// one first if needed, and caches the CGT.
    pub async fn authorize(&self, ns: &Namespace, now: u64) -> Result<CgtEntry, ConsumerError> {
        let flight = self.flight(Flight::Cgt(ns.clone()));
        let _guard = flight.lock().await;
        let tgt = self.ensure_tgt(now).await?;
        match self.authorize_with(ns, &tgt).await {
            Err(ConsumerError::Service(e)) if e.code == ErrorCode::TgtExpired => {
                self.cache.lock().unwrap().tgt = None;
                let tgt = self.authenticate_locked(now).await?;
                self.authorize_with(ns, &tgt).await
            }
            other => other,
        }
    }

    fn token_key(&self) -> Result<SymKey, ConsumerError> {
        let Credentials::Password { password, salt, params } = &self.config.credentials else {
            unreachable!("token_key is only used in password mode");
        };
        if let Some(k) = self.password_key.get() {
            return Ok(k.clone());
        }
        let k = password_to_key(password, salt, params).map_err(|e| ConsumerError::Credentials(e.to_string()))?;
        Ok(self.password_key.get_or_init(|| k).clone())
    }

    async fn run_authentication(&self) -> Result<TgtEntry, ConsumerError> {
        let interest = attach_payload_with(
            &self.config.names.tgt_name,
            self.config.uid.as_bytes().to_vec(),
            self.config.digest,
        )?;
        let reply = self.exchange(Phase::Authentication, interest).await?;
        let (tgt, token) = split_parts(reply_body(&reply)?)?;
        let token = match &self.config.credentials {
            Credentials::SecretKey(sk) => open_token_cgt(&self.crypto, sk, token),
            Credentials::Password { .. } => open_token_cgt_sym(&self.crypto, &self.token_key()?, token),
        }
        .map_err(|_| ConsumerError::AuthFail)?;
        let entry = TgtEntry {
            tgt: tgt.to_vec(),
            t1: token.t1,
            k_cgt: token.k_cgt,
        };
        self.cache.lock().unwrap().tgt = Some(entry.clone());
        Ok(entry)
    }

    async fn authorize_with(&self, ns: &Namespace, tgt: &TgtEntry) -> Result<CgtEntry, ConsumerError> {
        let field = if self.config.encrypt_namespace {
            NamespaceField::Encrypted(self.crypto.sym_encrypt(&tgt.k_cgt, ns.to_string().as_bytes()))
        } else {
            NamespaceField::Clear(ns.clone())
        };
        let interest = attach_payload_with(
            &self.config.names.cgt_name,
            field.encode_request(&tgt.tgt),
            self.config.digest,
        )?;
        let reply = self.exchange(Phase::Authorization, interest).await?;
        let (cgt, token) = split_parts(reply_body(&reply)?)?;
        let token = open_token_n(&self.crypto, &tgt.k_cgt, token).map_err(|_| ConsumerError::AuthFail)?;
        let entry = CgtEntry {
            cgt: cgt.to_vec(),
            t2: token.t2,
            k_n: token.k_n,
        };
        self.cache.lock().unwrap().cgts.insert(ns.clone(), entry.clone());
        Ok(entry)
    }

    async fn exchange(&self, phase: Phase, interest: Interest) -> Result<ContentObject, ConsumerError> {
        let counter = match phase {
            Phase::Authentication => &self.counters.authentication,
            Phase::Authorization => &self.counters.authorization,
            Phase::Content => &self.counters.content,
            Phase::Challenge => &self.counters.challenge,
            Phase::Plain => &self.counters.plain,
        };
        counter.fetch_add(1, Ordering::Relaxed);
        let expected = interest.name().clone();
        let reply = self.transport.exchange(interest).await?;
        if reply.name != expected {
            return Err(ConsumerError::Protocol(format!(
                "reply for {} does not match interest {expected}",
                reply.name
            )));
        }
        Ok(reply)
    }
}

fn reply_body(reply: &ContentObject) -> Result<&[u8], ConsumerError> {
    decode_reply(&reply.payload)?.map_err(ConsumerError::Service)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ns(s: &str) -> Namespace {
        Namespace::parse(s).unwrap()
    }

    fn config() -> RealmClientConfig {
        RealmClientConfig::new("alice", Credentials::SecretKey(SecretKey::from_bytes([1; 32])))
            .restrict(RestrictedNamespace::new(ns("/edu/uni-X/ics/cs/students/alice/*")))
            .restrict(RestrictedNamespace::new(ns("/edu/uni-X/ics/cs/students/alice/private/*")).mutual())
    }

    #[test]
    fn namespace_selection() {
        let c = config();
        let img = Name::parse("/edu/uni-X/ics/cs/students/alice/images/img1.png").unwrap();
        assert_eq!(
            select_namespace(&img, &c).unwrap().prefix,
            ns("/edu/uni-X/ics/cs/students/alice/*")
        );
        assert!(select_namespace(&Name::parse("/public/news").unwrap(), &c).is_none());
        let deep = Name::parse("/edu/uni-X/ics/cs/students/alice/private/diary").unwrap();
        let picked = select_namespace(&deep, &c).unwrap();
        assert_eq!(picked.prefix, ns("/edu/uni-X/ics/cs/students/alice/private/*"));
        assert_eq!(picked.mode, ProducerMode::Mutual);
    }

    #[test]
    fn cache_validity_respects_skew() {
        let cache = TicketCache {
            tgt: Some(TgtEntry { tgt: vec![], t1: 100, k_cgt: SymKey::from_bytes([0; 32]) }),
            ..Default::default()
        };
        assert!(cache.valid_tgt(70, 30).is_some());
        assert!(cache.valid_tgt(71, 30).is_none());
        assert!(cache.valid_tgt(100, 0).is_some());
        assert!(cache.valid_cgt(&ns("/a/*"), 0, 0).is_none());
    }

    #[test]
    fn exchange_totals() {
        let c = ExchangeCounts { authentication: 1, authorization: 2, content: 3, challenge: 4, plain: 5 };
        assert_eq!(c.total(), 15);
        assert_eq!((c - c).total(), 0);
    }
}
