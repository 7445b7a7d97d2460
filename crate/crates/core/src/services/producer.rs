use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use crate::crypto::{Crypto, SymKey, NONCE_LEN};
use crate::names::{Name, Namespace};
use crate::tickets::{check_expiry, open_cgt, Expiry};
use crate::wire::{error_content, ok_content, ContentObject, ErrorCode, Interest};

use super::Service;

/// Interest payload kinds understood by a producer.
pub const KIND_CGT: u8 = 0x01;
pub const KIND_CHALLENGE_REPLY: u8 = 0x02;

/// Seconds an issued challenge stays answerable.
pub const CHALLENGE_DEADLINE: u64 = 10;
const DEFAULT_CHALLENGE_CAPACITY: usize = 65_536;

/// Backing store for restricted content. `suffix` is the part of the name
/// below the producer's namespace.
pub trait ContentSource: Send + Sync {
    fn fetch(&self, name: &Name, suffix: &[String]) -> Option<Vec<u8>>;
}

/// Maps the name suffix onto a relative path under `root`.
#[derive(Debug, Clone)]
pub struct FileRepository {
    root: PathBuf,
}

impl FileRepository {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }
}

impl ContentSource for FileRepository {
    fn fetch(&self, _name: &Name, suffix: &[String]) -> Option<Vec<u8>> {
        if suffix.is_empty() || suffix.iter().any(|s| s == "." || s == ".." || s.contains('\\')) {
            return None;
        }
        let path = suffix.iter().fold(self.root.clone(), |p, s| p.join(s));
        std::fs::read(path).ok()
    }
}

/// Deterministic pseudo-random blocks of a fixed size, keyed by name.
#[derive(Debug, Clone, Copy)]
pub struct SyntheticSource {
    pub size: usize,
}

impl ContentSource for SyntheticSource {
    fn fetch(&self, name: &Name, _suffix: &[String]) -> Option<Vec<u8>> {
        let seed: [u8; 32] = Sha256::digest(name.to_string().as_bytes()).into();
        let mut out = vec![0u8; self.size];
        ChaCha20Rng::from_seed(seed).fill_bytes(&mut out);
        Some(out)
    }
}

/// In-memory items keyed by `/`-joined suffix.
#[derive(Debug, Clone, Default)]
pub struct MemorySource {
    items: HashMap<String, Vec<u8>>,
}

impl MemorySource {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, suffix: &str, data: impl Into<Vec<u8>>) -> Self {
        self.insert(suffix, data);
        self
    }

    pub fn insert(&mut self, suffix: &str, data: impl Into<Vec<u8>>) {
        self.items.insert(suffix.trim_matches('/').to_owned(), data.into());
    }
}

impl ContentSource for MemorySource {
    fn fetch(&self, _name: &Name, suffix: &[String]) -> Option<Vec<u8>> {
        self.items.get(&suffix.join("/")).cloned()
    }
}

/// Adds one to a 256-bit big-endian integer, wrapping at 2^256.
pub fn increment_nonce(n: &[u8; NONCE_LEN]) -> [u8; NONCE_LEN] {
    let mut out = *n;
    for byte in out.iter_mut().rev() {
        let (v, carry) = byte.overflowing_add(1);
        *byte = v;
        if !carry {
            break;
        }
    }
    out
}

/// Challenge id: digest of the challenge ciphertext.
pub fn challenge_id(chall: &[u8]) -> [u8; 32] {
    Sha256::digest(chall).into()
}

#[derive(Debug, Clone)]
struct Challenge {
    n1: [u8; NONCE_LEN],
    k_n: SymKey,
    name: Name,
    deadline: u64,
}

/// Outstanding challenges between the two rounds of mutual retrieval. Bounded;
/// entries are single use and expire at their deadline.
#[derive(Debug)]
pub struct ChallengeTable {
    entries: HashMap<[u8; 32], Challenge>,
    capacity: usize,
}

impl Default for ChallengeTable {
    fn default() -> Self {
        Self::with_capacity(DEFAULT_CHALLENGE_CAPACITY)
    }
}

impl ChallengeTable {
    pub fn with_capacity(capacity: usize) -> Self {
        assert!(capacity > 0);
        Self {
            entries: HashMap::new(),
            capacity,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn purge(&mut self, now: u64) -> usize {
        let before = self.entries.len();
        self.entries.retain(|_, c| c.deadline >= now);
        before - self.entries.len()
    }

    fn insert(&mut self, id: [u8; 32], challenge: Challenge, now: u64) {
        if self.entries.len() >= self.capacity {
            self.purge(now);
        }
        if self.entries.len() >= self.capacity {
            let oldest = self
                .entries
                .iter()
                .min_by_key(|(_, c)| c.deadline)
                .map(|(id, _)| *id);
            if let Some(id) = oldest {
                self.entries.remove(&id);
            }
        }
        self.entries.insert(id, challenge);
    }

    fn take(&mut self, id: &[u8; 32]) -> Option<Challenge> {
        self.entries.remove(id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProducerMode {
    /// One round: CGT in, encrypted content out.
    #[default]
    Plain,
    /// Challenge-response round before any content is produced.
    Mutual,
}

type Reject = (ErrorCode, String);

/// Content producer enforcing CGTs for one registered namespace.
pub struct Producer {
    namespace: Namespace,
    k_p: SymKey,
    mode: ProducerMode,
    source: Arc<dyn ContentSource>,
    challenges: Mutex<ChallengeTable>,
    crypto: Crypto,
    skew: u64,
    produce_calls: AtomicU64,
}

impl Producer {
    pub fn new(
        namespace: Namespace,
        k_p: SymKey,
        mode: ProducerMode,
        source: Arc<dyn ContentSource>,
        skew: u64,
        crypto: Crypto,
    ) -> Self {
        Self {
            namespace,
            k_p,
            mode,
            source,
            challenges: Mutex::new(ChallengeTable::default()),
            crypto,
            skew,
            produce_calls: AtomicU64::new(0),
        }
    }

    pub fn namespace(&self) -> &Namespace {
        &self.namespace
    }

    pub fn mode(&self) -> ProducerMode {
        self.mode
    }

    pub fn crypto(&self) -> &Crypto {
        &self.crypto
    }

    /// Number of successful or attempted content productions so far.
    pub fn produce_calls(&self) -> u64 {
        self.produce_calls.load(Ordering::Relaxed)
    }

    pub fn pending_challenges(&self) -> usize {
        self.challenges.lock().unwrap().len()
    }

    pub fn produce_data(&self, name: &Name) -> Result<Vec<u8>, Reject> {
        self.produce_calls.fetch_add(1, Ordering::Relaxed);
        self.namespace
            .suffix_of(name)
            .and_then(|suffix| self.source.fetch(name, suffix))
            .ok_or_else(|| (ErrorCode::NoContent, format!("no content for {name}")))
    }

    pub fn handle(&self, interest: &Interest, now: u64) -> ContentObject {
        let reply_name = interest.name().clone();
        let result = match interest.payload().split_first() {
            Some((&KIND_CGT, cgt)) => match self.mode {
                ProducerMode::Plain => self.serve(interest, cgt, now),
                ProducerMode::Mutual => self.challenge(interest, cgt, now),
            },
            Some((&KIND_CHALLENGE_REPLY, body)) if self.mode == ProducerMode::Mutual => {
                self.answer(interest, body, now)
            }
            Some((&KIND_CHALLENGE_REPLY, _)) => {
                Err((ErrorCode::ChallengeFailed, "producer does not run challenges".into()))
            }
            _ => Err((ErrorCode::CgtInvalid, "interest carries no CGT".into())),
        };
        match result {
            Ok(body) => ok_content(reply_name, &body),
            Err((code, msg)) => error_content(reply_name, code, msg),
        }
    }

    /// Opens and checks the CGT against the interest name. Returns `k_N`.
    fn admit(&self, interest: &Interest, cgt: &[u8], now: u64) -> Result<SymKey, Reject> {
        let plain = open_cgt(&self.crypto, &self.k_p, cgt)
            .map_err(|e| (ErrorCode::CgtInvalid, e.to_string()))?;
        if check_expiry(plain.t2, now, self.skew) == Expiry::Expired {
            return Err((ErrorCode::CgtExpired, "CGT expired".into()));
        }
        if !plain.ns.matches(&interest.base_name()) {
            return Err((
                ErrorCode::PrefixMismatch,
                format!("{} is outside {}", interest.base_name(), plain.ns),
            ));
        }
        Ok(plain.k_n)
    }

    fn serve(&self, interest: &Interest, cgt: &[u8], now: u64) -> Result<Vec<u8>, Reject> {
        let k_n = self.admit(interest, cgt, now)?;
        let data = self.produce_data(&interest.base_name())?;
        Ok(self.crypto.sym_encrypt(&k_n, &data))
    }

    fn challenge(&self, interest: &Interest, cgt: &[u8], now: u64) -> Result<Vec<u8>, Reject> {
        let k_n = self.admit(interest, cgt, now)?;
        let n1 = self.crypto.random_nonce();
        let chall = self.crypto.sym_encrypt(&k_n, &n1);
        self.challenges.lock().unwrap().insert(
            challenge_id(&chall),
            Challenge {
                n1,
                k_n,
                name: interest.base_name(),
                deadline: now.saturating_add(CHALLENGE_DEADLINE),
            },
            now,
        );
        Ok(chall)
    }

    fn answer(&self, interest: &Interest, body: &[u8], now: u64) -> Result<Vec<u8>, Reject> {
        let fail = |msg: &str| (ErrorCode::ChallengeFailed, msg.to_owned());
        if body.len() < 32 {
            return Err(fail("malformed challenge reply"));
        }
        let (id, reply) = body.split_at(32);
        let id: [u8; 32] = id.try_into().unwrap();
        let entry = self
            .challenges
            .lock()
            .unwrap()
            .take(&id)
            .ok_or_else(|| fail("unknown or already used challenge"))?;
        if now > entry.deadline {
            return Err(fail("challenge expired"));
        }
        if entry.name != interest.base_name() {
            return Err(fail("challenge was issued for another name"));
        }
        let value = self
            .crypto
            .sym_decrypt(&entry.k_n, reply)
            .map_err(|_| fail("reply not sealed under the session key"))?;
        if value.as_slice() != increment_nonce(&entry.n1) {
            return Err(fail("wrong challenge answer"));
        }
        let data = self.produce_data(&entry.name)?;
        Ok(self.crypto.sym_encrypt(&entry.k_n, &data))
    }
}

impl Service for Producer {
    fn handle(&self, interest: &Interest, now: u64) -> ContentObject {
        Producer::handle(self, interest, now)
    }

    fn label(&self) -> &str {
        "producer"
    }
}

/// Producer of unrestricted content: plain interests, plain (cacheable)
/// replies. Serves as the baseline in RTT measurements.
pub struct PlainProducer {
    prefix: Name,
    source: Arc<dyn ContentSource>,
    expiry_time: u64,
}

impl PlainProducer {
    pub fn new(prefix: Name, source: Arc<dyn ContentSource>, expiry_time: u64) -> Self {
        Self {
            prefix,
            source,
            expiry_time,
        }
    }

    pub fn prefix(&self) -> &Name {
        &self.prefix
    }
}

impl Service for PlainProducer {
    fn handle(&self, interest: &Interest, _now: u64) -> ContentObject {
        let name = interest.name();
        let data = self
            .prefix
            .is_prefix_of(name)
            .then(|| self.source.fetch(name, &name.segments()[self.prefix.len()..]))
            .flatten();
        match data {
            Some(d) => ContentObject::new(name.clone(), d, self.expiry_time),
            None => error_content(name.clone(), ErrorCode::NoContent, format!("no content for {name}")),
        }
    }

    fn label(&self) -> &str {
        "plain-producer"
    }
}
