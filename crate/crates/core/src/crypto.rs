//! Cryptographic primitives used by the ticket protocols.
//!
//! Symmetric encryption is XChaCha20-Poly1305 with a random 24-byte nonce
//! carried in front of the ciphertext. Public-key encryption is the libsodium
//! sealed-box construction (X25519 + XSalsa20-Poly1305). Password keys come
//! from Argon2id.
//!
//! Every primitive call goes through a [`Crypto`] handle, which owns a
//! randomness source and an [`OpCounter`]. Handles are cheap to clone and can
//! share or separate either part.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use chacha20poly1305::aead::{Aead, KeyInit};
use chacha20poly1305::{XChaCha20Poly1305, XNonce};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Security parameter, in bits, for keys and nonces.
pub const LAMBDA_BITS: usize = 256;
pub const KEY_LEN: usize = LAMBDA_BITS / 8;
pub const NONCE_LEN: usize = LAMBDA_BITS / 8;
pub const SALT_LEN: usize = 16;

const AEAD_NONCE_LEN: usize = 24;
const AEAD_TAG_LEN: usize = 16;
/// Bytes added by [`Crypto::sym_encrypt`].
pub const SYM_OVERHEAD: usize = AEAD_NONCE_LEN + AEAD_TAG_LEN;
/// Bytes added by [`Crypto::pk_encrypt`].
pub const PK_OVERHEAD: usize = crypto_box::SEALBYTES;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error("E_AUTH_FAIL: ciphertext failed authentication")]
    AuthFail,
    #[error("password must not be empty")]
    EmptyPassword,
    #[error("invalid KDF parameters: {0}")]
    KdfParams(String),
    #[error("invalid key encoding: {0}")]
    KeyEncoding(String),
}

macro_rules! key_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, PartialEq, Eq, Hash)]
        pub struct $name([u8; KEY_LEN]);

        impl $name {
            pub fn from_bytes(bytes: [u8; KEY_LEN]) -> Self {
                Self(bytes)
            }

            pub fn from_slice(bytes: &[u8]) -> Result<Self, CryptoError> {
                let arr: [u8; KEY_LEN] = bytes.try_into().map_err(|_| {
                    CryptoError::KeyEncoding(format!("expected {KEY_LEN} bytes, got {}", bytes.len()))
                })?;
                Ok(Self(arr))
            }

            pub fn as_bytes(&self) -> &[u8; KEY_LEN] {
                &self.0
            }

            pub fn to_base64(&self) -> String {
                B64.encode(self.0)
            }

            pub fn from_base64(text: &str) -> Result<Self, CryptoError> {
                let raw = B64
                    .decode(text.trim())
                    .map_err(|e| CryptoError::KeyEncoding(e.to_string()))?;
                Self::from_slice(&raw)
            }
        }
    };
}

key_type!(
    /// 256-bit symmetric secret.
    SymKey
);
key_type!(
    /// X25519 public key.
    PublicKey
);
key_type!(
    /// X25519 secret key.
    SecretKey
);

impl fmt::Debug for SymKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SymKey(..)")
    }
}

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SecretKey(..)")
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", hex::encode(&self.0[..8]))
    }
}

impl SecretKey {
    pub fn public_key(&self) -> PublicKey {
        let sk = crypto_box::SecretKey::from_bytes(self.0);
        PublicKey(sk.public_key().to_bytes())
    }
}

#[derive(Clone, Debug)]
pub struct KeyPair {
    pub public: PublicKey,
    pub secret: SecretKey,
}

impl KeyPair {
    pub fn from_secret(secret: SecretKey) -> Self {
        Self {
            public: secret.public_key(),
            secret,
        }
    }
}

/// Cryptographically secure randomness, either seeded from the OS or from a
/// fixed seed for reproducible runs.
pub struct Entropy {
    rng: Mutex<ChaCha20Rng>,
}

impl Entropy {
    pub fn from_os() -> Self {
        Self {
            rng: Mutex::new(ChaCha20Rng::from_entropy()),
        }
    }

    /// Deterministic stream derived from `seed` and a per-entity `label`, so
    /// entities seeded from one value still draw independent streams.
    pub fn seeded(seed: u64, label: &str) -> Self {
        let mut h = Sha256::new();
        h.update(seed.to_be_bytes());
        h.update(label.as_bytes());
        let digest: [u8; 32] = h.finalize().into();
        Self {
            rng: Mutex::new(ChaCha20Rng::from_seed(digest)),
        }
    }

    pub fn fill(&self, buf: &mut [u8]) {
        self.rng.lock().unwrap().fill_bytes(buf);
    }

    fn with_rng<T>(&self, f: impl FnOnce(&mut ChaCha20Rng) -> T) -> T {
        f(&mut self.rng.lock().unwrap())
    }
}

impl fmt::Debug for Entropy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Entropy")
    }
}

/// Counts primitive invocations.
#[derive(Debug, Default)]
pub struct OpCounter {
    pk_enc: AtomicU64,
    pk_dec: AtomicU64,
    sym_enc: AtomicU64,
    sym_dec: AtomicU64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounts {
    pub pk_enc: u64,
    pub pk_dec: u64,
    pub sym_enc: u64,
    pub sym_dec: u64,
}

impl std::ops::Sub for OpCounts {
    type Output = OpCounts;

    fn sub(self, rhs: Self) -> Self {
        OpCounts {
            pk_enc: self.pk_enc - rhs.pk_enc,
            pk_dec: self.pk_dec - rhs.pk_dec,
            sym_enc: self.sym_enc - rhs.sym_enc,
            sym_dec: self.sym_dec - rhs.sym_dec,
        }
    }
}

impl std::ops::Add for OpCounts {
    type Output = OpCounts;

    fn add(self, rhs: Self) -> Self {
        OpCounts {
            pk_enc: self.pk_enc + rhs.pk_enc,
            pk_dec: self.pk_dec + rhs.pk_dec,
            sym_enc: self.sym_enc + rhs.sym_enc,
            sym_dec: self.sym_dec + rhs.sym_dec,
        }
    }
}

impl OpCounter {
    pub fn snapshot(&self) -> OpCounts {
        OpCounts {
            pk_enc: self.pk_enc.load(Ordering::Relaxed),
            pk_dec: self.pk_dec.load(Ordering::Relaxed),
            sym_enc: self.sym_enc.load(Ordering::Relaxed),
            sym_dec: self.sym_dec.load(Ordering::Relaxed),
        }
    }

    pub fn reset(&self) {
        for c in [&self.pk_enc, &self.pk_dec, &self.sym_enc, &self.sym_dec] {
            c.store(0, Ordering::Relaxed);
        }
    }

    fn bump(c: &AtomicU64) {
        c.fetch_add(1, Ordering::Relaxed);
    }
}

/// Handle to the primitives, bound to a randomness source and a counter.
#[derive(Clone, Debug)]
pub struct Crypto {
    entropy: Arc<Entropy>,
    counter: Arc<OpCounter>,
}

impl Default for Crypto {
    fn default() -> Self {
        Self::new(Arc::new(Entropy::from_os()))
    }
}

impl Crypto {
    pub fn new(entropy: Arc<Entropy>) -> Self {
        Self {
            entropy,
            counter: Arc::new(OpCounter::default()),
        }
    }

    pub fn seeded(seed: u64, label: &str) -> Self {
        Self::new(Arc::new(Entropy::seeded(seed, label)))
    }

    /// Same randomness source, fresh counter.
    pub fn with_fresh_counter(&self) -> Self {
        Self::new(self.entropy.clone())
    }

    pub fn counter(&self) -> &OpCounter {
        &self.counter
    }

    pub fn counts(&self) -> OpCounts {
        self.counter.snapshot()
    }

    pub fn entropy(&self) -> &Arc<Entropy> {
        &self.entropy
    }

    pub fn random_key(&self) -> SymKey {
        SymKey(self.random_nonce())
    }

    /// λ-bit uniform random value.
    pub fn random_nonce(&self) -> [u8; NONCE_LEN] {
        let mut out = [0u8; NONCE_LEN];
        self.entropy.fill(&mut out);
        out
    }

    pub fn random_bytes(&self, len: usize) -> Vec<u8> {
        let mut out = vec![0u8; len];
        self.entropy.fill(&mut out);
        out
    }

    pub fn random_salt(&self) -> [u8; SALT_LEN] {
        let mut out = [0u8; SALT_LEN];
        self.entropy.fill(&mut out);
        out
    }

    pub fn generate_keypair(&self) -> KeyPair {
        let sk = self
            .entropy
            .with_rng(crypto_box::SecretKey::generate);
        KeyPair::from_secret(SecretKey(sk.to_bytes()))
    }

    /// Output layout: nonce (24) ‖ ciphertext ‖ tag (16).
    pub fn sym_encrypt(&self, key: &SymKey, plaintext: &[u8]) -> Vec<u8> {
        OpCounter::bump(&self.counter.sym_enc);
        let mut nonce = [0u8; AEAD_NONCE_LEN];
        self.entropy.fill(&mut nonce);
        let cipher = XChaCha20Poly1305::new(key.0.as_ref().into());
        let body = cipher
            .encrypt(XNonce::from_slice(&nonce), plaintext)
            .expect("XChaCha20-Poly1305 encryption is infallible for in-memory buffers");
        let mut out = Vec::with_capacity(SYM_OVERHEAD + plaintext.len());
        out.extend_from_slice(&nonce);
        out.extend_from_slice(&body);
        out
    }

    pub fn sym_decrypt(&self, key: &SymKey, ciphertext: &[u8]) -> Result<Vec<u8>, CryptoError> {
        OpCounter::bump(&self.counter.sym_dec);
        if ciphertext.len() < SYM_OVERHEAD {
            return Err(CryptoError::AuthFail);
        }
        let (nonce, body) = ciphertext.split_at(AEAD_NONCE_LEN);
        let cipher = XChaCha20Poly1305::new(key.0.as_ref().into());
        cipher
            .decrypt(XNonce::from_slice(nonce), body)
            .map_err(|_| CryptoError::AuthFail)
    }

    /// Anonymous sealed box to `pk`.
    pub fn pk_encrypt(&self, pk: &PublicKey, plaintext: &[u8]) -> Vec<u8> {
        OpCounter::bump(&self.counter.pk_enc);
        let pk = crypto_box::PublicKey::from_bytes(pk.0);
        self.entropy
            .with_rng(|rng| pk.seal(rng, plaintext))
            .expect("sealed-box encryption is infallible for in-memory buffers")
    }

    pub fn pk_decrypt(&self, sk: &SecretKey, ciphertext: &[u8]) -> Result<Vec<u8>, CryptoError> {
        OpCounter::bump(&self.counter.pk_dec);
        if ciphertext.len() < PK_OVERHEAD {
            return Err(CryptoError::AuthFail);
        }
        crypto_box::SecretKey::from_bytes(sk.0)
            .unseal(ciphertext)
            .map_err(|_| CryptoError::AuthFail)
    }
}

/// Argon2id cost parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KdfParams {
    /// Memory in KiB.
    pub m_cost: u32,
    pub t_cost: u32,
    pub p_cost: u32,
}

impl Default for KdfParams {
    fn default() -> Self {
        Self {
            m_cost: argon2::Params::DEFAULT_M_COST,
            t_cost: argon2::Params::DEFAULT_T_COST,
            p_cost: argon2::Params::DEFAULT_P_COST,
        }
    }
}

impl KdfParams {
    /// Minimal cost, for tests and benches only.
    pub const fn light() -> Self {
        Self {
            m_cost: 64,
            t_cost: 1,
            p_cost: 1,
        }
    }
}

impl fmt::Display for KdfParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "m={},t={},p={}", self.m_cost, self.t_cost, self.p_cost)
    }
}

impl std::str::FromStr for KdfParams {
    type Err = CryptoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut params = KdfParams::default();
        for part in s.split(',') {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| CryptoError::KdfParams(format!("malformed entry {part:?}")))?;
            let v: u32 = v
                .parse()
                .map_err(|_| CryptoError::KdfParams(format!("bad number in {part:?}")))?;
            match k.trim() {
                "m" => params.m_cost = v,
                "t" => params.t_cost = v,
                "p" => params.p_cost = v,
                other => return Err(CryptoError::KdfParams(format!("unknown field {other:?}"))),
            }
        }
        Ok(params)
    }
}

pub fn password_to_key(
    password: &str,
    salt: &[u8; SALT_LEN],
    params: &KdfParams,
) -> Result<SymKey, CryptoError> {
    if password.is_empty() {
        return Err(CryptoError::EmptyPassword);
    }
    let p = argon2::Params::new(params.m_cost, params.t_cost, params.p_cost, Some(KEY_LEN))
        .map_err(|e| CryptoError::KdfParams(e.to_string()))?;
    let kdf = argon2::Argon2::new(argon2::Algorithm::Argon2id, argon2::Version::V0x13, p);
    let mut out = [0u8; KEY_LEN];
    kdf.hash_password_into(password.as_bytes(), salt, &mut out)
        .map_err(|e| CryptoError::KdfParams(e.to_string()))?;
    Ok(SymKey(out))
}
