//! Ticket and token plaintext layouts, sealing, and expiry checks.
//!
//! Layouts (all integers big-endian, times in seconds since the epoch):
//!
//! ```text
//! TGT     : uid_len u16 ‖ uid ‖ t1 u64 ‖ k_cgt[32]    sealed under k_A
//! CGT     : ns_len  u16 ‖ ns  ‖ k_n[32] ‖ t2 u64      sealed under k_P
//! token_CGT : k_cgt[32] ‖ t1 u64                      sealed to pk_C (or a password key)
//! token_N   : k_n[32]   ‖ t2 u64                      sealed under k_CGT
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{Crypto, CryptoError, PublicKey, SecretKey, SymKey, KEY_LEN};
use crate::names::Namespace;

/// 8 hours.
pub const DEFAULT_TGT_LIFETIME: u64 = 8 * 60 * 60;
/// 1 hour.
pub const DEFAULT_CGT_LIFETIME: u64 = 60 * 60;
pub const DEFAULT_SKEW: u64 = 30;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TicketError {
    #[error("E_TGT_INVALID: ticket-granting ticket failed authentication")]
    TgtInvalid,
    #[error("E_CGT_INVALID: content-granting ticket failed authentication")]
    CgtInvalid,
    #[error("E_AUTH_FAIL: token failed authentication")]
    AuthFail,
    #[error("E_CODEC: {0}")]
    Codec(String),
}

impl From<CryptoError> for TicketError {
    fn from(_: CryptoError) -> Self {
        TicketError::AuthFail
    }
}

fn codec(msg: &str) -> TicketError {
    TicketError::Codec(msg.to_owned())
}

/// Realm-wide ticket lifetimes and the tolerated clock skew, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lifetimes {
    pub tgt: u64,
    pub cgt: u64,
    pub skew: u64,
}

impl Default for Lifetimes {
    fn default() -> Self {
        Self {
            tgt: DEFAULT_TGT_LIFETIME,
            cgt: DEFAULT_CGT_LIFETIME,
            skew: DEFAULT_SKEW,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expiry {
    Valid,
    Expired,
}

/// Expired iff `now > expiry + skew`; the boundary itself is still valid.
pub fn check_expiry(expiry: u64, now: u64, skew: u64) -> Expiry {
    if now > expiry.saturating_add(skew) {
        Expiry::Expired
    } else {
        Expiry::Valid
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TgtPlain {
    pub uid: String,
    pub t1: u64,
    pub k_cgt: SymKey,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CgtPlain {
    pub ns: Namespace,
    pub k_n: SymKey,
    pub t2: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenCgt {
    pub k_cgt: SymKey,
    pub t1: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenN {
    pub k_n: SymKey,
    pub t2: u64,
}

struct Reader<'a>(&'a [u8]);

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TicketError> {
        if self.0.len() < n {
            return Err(codec("truncated ticket plaintext"));
        }
        let (head, tail) = self.0.split_at(n);
        self.0 = tail;
        Ok(head)
    }

    fn u16(&mut self) -> Result<u16, TicketError> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, TicketError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn key(&mut self) -> Result<SymKey, TicketError> {
        Ok(SymKey::from_bytes(self.take(KEY_LEN)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<&'a str, TicketError> {
        let len = self.u16()? as usize;
        std::str::from_utf8(self.take(len)?).map_err(|_| codec("ticket string is not UTF-8"))
    }

    fn finish(self) -> Result<(), TicketError> {
        if self.0.is_empty() {
            Ok(())
        } else {
            Err(codec("trailing bytes in ticket plaintext"))
        }
    }
}

fn put_string(out: &mut Vec<u8>, s: &str) {
    assert!(s.len() <= u16::MAX as usize, "ticket string too long");
    out.extend_from_slice(&(s.len() as u16).to_be_bytes());
    out.extend_from_slice(s.as_bytes());
}

impl TgtPlain {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(2 + self.uid.len() + 8 + KEY_LEN);
        put_string(&mut out, &self.uid);
        out.extend_from_slice(&self.t1.to_be_bytes());
        out.extend_from_slice(self.k_cgt.as_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, TicketError> {
        let mut r = Reader(bytes);
        let uid = r.string()?.to_owned();
        let t1 = r.u64()?;
        let k_cgt = r.key()?;
        r.finish()?;
        if uid.is_empty() {
            return Err(codec("empty uid"));
        }
        Ok(Self { uid, t1, k_cgt })
    }
}

impl CgtPlain {
    pub fn encode(&self) -> Vec<u8> {
        let ns = self.ns.to_string();
        let mut out = Vec::with_capacity(2 + ns.len() + KEY_LEN + 8);
        put_string(&mut out, &ns);
        out.extend_from_slice(self.k_n.as_bytes());
        out.extend_from_slice(&self.t2.to_be_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, TicketError> {
        let mut r = Reader(bytes);
        let ns = Namespace::parse(r.string()?).map_err(|_| codec("bad namespace in CGT"))?;
        let k_n = r.key()?;
        let t2 = r.u64()?;
        r.finish()?;
        Ok(Self { ns, k_n, t2 })
    }
}

fn encode_key_expiry(key: &SymKey, expiry: u64) -> Vec<u8> {
    let mut out = Vec::with_capacity(KEY_LEN + 8);
    out.extend_from_slice(key.as_bytes());
    out.extend_from_slice(&expiry.to_be_bytes());
    out
}

fn decode_key_expiry(bytes: &[u8]) -> Result<(SymKey, u64), TicketError> {
    let mut r = Reader(bytes);
    let key = r.key()?;
    let expiry = r.u64()?;
    r.finish()?;
    Ok((key, expiry))
}

pub fn seal_tgt(crypto: &Crypto, k_a: &SymKey, plain: &TgtPlain) -> Vec<u8> {
    crypto.sym_encrypt(k_a, &plain.encode())
}

pub fn open_tgt(crypto: &Crypto, k_a: &SymKey, bytes: &[u8]) -> Result<TgtPlain, TicketError> {
    let pt = crypto
        .sym_decrypt(k_a, bytes)
        .map_err(|_| TicketError::TgtInvalid)?;
    TgtPlain::decode(&pt)
}

pub fn seal_cgt(crypto: &Crypto, k_p: &SymKey, plain: &CgtPlain) -> Vec<u8> {
    crypto.sym_encrypt(k_p, &plain.encode())
}

pub fn open_cgt(crypto: &Crypto, k_p: &SymKey, bytes: &[u8]) -> Result<CgtPlain, TicketError> {
    let pt = crypto
        .sym_decrypt(k_p, bytes)
        .map_err(|_| TicketError::CgtInvalid)?;
    CgtPlain::decode(&pt)
}

pub fn seal_token_cgt(crypto: &Crypto, pk_c: &PublicKey, k_cgt: &SymKey, t1: u64) -> Vec<u8> {
    crypto.pk_encrypt(pk_c, &encode_key_expiry(k_cgt, t1))
}

pub fn open_token_cgt(crypto: &Crypto, sk_c: &SecretKey, bytes: &[u8]) -> Result<TokenCgt, TicketError> {
    let pt = crypto.pk_decrypt(sk_c, bytes)?;
    let (k_cgt, t1) = decode_key_expiry(&pt)?;
    Ok(TokenCgt { k_cgt, t1 })
}

/// Password-mode variant of the CGT token, sealed under the user's
/// password-derived key.
pub fn seal_token_cgt_sym(crypto: &Crypto, pwd_key: &SymKey, k_cgt: &SymKey, t1: u64) -> Vec<u8> {
    crypto.sym_encrypt(pwd_key, &encode_key_expiry(k_cgt, t1))
}

pub fn open_token_cgt_sym(crypto: &Crypto, pwd_key: &SymKey, bytes: &[u8]) -> Result<TokenCgt, TicketError> {
    let pt = crypto.sym_decrypt(pwd_key, bytes)?;
    let (k_cgt, t1) = decode_key_expiry(&pt)?;
    Ok(TokenCgt { k_cgt, t1 })
}

pub fn seal_token_n(crypto: &Crypto, k_cgt: &SymKey, k_n: &SymKey, t2: u64) -> Vec<u8> {
    crypto.sym_encrypt(k_cgt, &encode_key_expiry(k_n, t2))
}

pub fn open_token_n(crypto: &Crypto, k_cgt: &SymKey, bytes: &[u8]) -> Result<TokenN, TicketError> {
    let pt = crypto.sym_decrypt(k_cgt, bytes)?;
    let (k_n, t2) = decode_key_expiry(&pt)?;
    Ok(TokenN { k_n, t2 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn crypto() -> Crypto {
        Crypto::seeded(11, "tickets")
    }

    fn tgt(c: &Crypto) -> TgtPlain {
        TgtPlain {
            uid: "alice".into(),
            t1: 1_700_000_000,
            k_cgt: c.random_key(),
        }
    }

    fn cgt(c: &Crypto) -> CgtPlain {
        CgtPlain {
            ns: Namespace::parse("/edu/uni-X/ics/cs/students/alice/*").unwrap(),
            k_n: c.random_key(),
            t2: 1_700_003_600,
        }
    }

    #[test]
    fn tgt_round_trip_and_rejections() {
        let c = crypto();
        let k_a = c.random_key();
        let plain = tgt(&c);
        let sealed = seal_tgt(&c, &k_a, &plain);
        assert_eq!(open_tgt(&c, &k_a, &sealed).unwrap(), plain);
        assert_eq!(open_tgt(&c, &c.random_key(), &sealed), Err(TicketError::TgtInvalid));
        let mut bad = sealed.clone();
        bad[30] ^= 0x04;
        assert_eq!(open_tgt(&c, &k_a, &bad), Err(TicketError::TgtInvalid));
        assert_ne!(sealed, seal_tgt(&c, &k_a, &plain));
    }

    #[test]
    fn tgt_layout() {
        let plain = TgtPlain {
            uid: "ab".into(),
            t1: 0x0102,
            k_cgt: SymKey::from_bytes([7; 32]),
        };
        let enc = plain.encode();
        assert_eq!(&enc[..4], &[0, 2, b'a', b'b']);
        assert_eq!(&enc[4..12], &[0, 0, 0, 0, 0, 0, 1, 2]);
        assert_eq!(&enc[12..], &[7; 32]);
    }

    #[test]
    fn cgt_round_trip_and_rejections() {
        let c = crypto();
        let k_p = c.random_key();
        let plain = cgt(&c);
        let sealed = seal_cgt(&c, &k_p, &plain);
        assert_eq!(open_cgt(&c, &k_p, &sealed).unwrap(), plain);
        assert_eq!(open_cgt(&c, &c.random_key(), &sealed), Err(TicketError::CgtInvalid));
        for cut in [0, 10, 40, sealed.len() - 1] {
            assert!(matches!(
                open_cgt(&c, &k_p, &sealed[..cut]),
                Err(TicketError::CgtInvalid | TicketError::Codec(_))
            ));
        }
    }

    #[test]
    fn authentic_but_malformed_plaintext_is_a_codec_error() {
        let c = crypto();
        let k = c.random_key();
        let junk = c.sym_encrypt(&k, b"\x00\x05ab");
        assert!(matches!(open_tgt(&c, &k, &junk), Err(TicketError::Codec(_))));
        assert!(matches!(open_cgt(&c, &k, &junk), Err(TicketError::Codec(_))));
    }

    #[test]
    fn expiry_boundaries() {
        assert_eq!(check_expiry(100, 100, 30), Expiry::Valid);
        assert_eq!(check_expiry(100, 130, 30), Expiry::Valid);
        assert_eq!(check_expiry(100, 131, 30), Expiry::Expired);
        assert_eq!(check_expiry(100, 0, 30), Expiry::Valid);
        assert_eq!(check_expiry(u64::MAX, u64::MAX, 30), Expiry::Valid);
    }

    #[test]
    fn tokens() {
        let c = crypto();
        let kp = c.generate_keypair();
        let k_cgt = c.random_key();
        let tok = seal_token_cgt(&c, &kp.public, &k_cgt, 42);
        assert_eq!(
            open_token_cgt(&c, &kp.secret, &tok).unwrap(),
            TokenCgt { k_cgt: k_cgt.clone(), t1: 42 }
        );
        assert_eq!(
            open_token_cgt(&c, &c.generate_keypair().secret, &tok),
            Err(TicketError::AuthFail)
        );

        let k_n = c.random_key();
        let tok = seal_token_n(&c, &k_cgt, &k_n, 7);
        assert_eq!(open_token_n(&c, &k_cgt, &tok).unwrap(), TokenN { k_n, t2: 7 });
        assert_eq!(open_token_n(&c, &c.random_key(), &tok), Err(TicketError::AuthFail));

        let pwd = c.random_key();
        let tok = seal_token_cgt_sym(&c, &pwd, &k_cgt, 9);
        assert_eq!(open_token_cgt_sym(&c, &pwd, &tok).unwrap().t1, 9);
        assert_eq!(open_token_cgt_sym(&c, &c.random_key(), &tok), Err(TicketError::AuthFail));
    }

    proptest! {
        #[test]
        fn tgt_layout_is_injective(
            a in ("[a-z]{1,6}", any::<u64>(), any::<[u8; 32]>()),
            b in ("[a-z]{1,6}", any::<u64>(), any::<[u8; 32]>()),
        ) {
            let pa = TgtPlain { uid: a.0, t1: a.1, k_cgt: SymKey::from_bytes(a.2) };
            let pb = TgtPlain { uid: b.0, t1: b.1, k_cgt: SymKey::from_bytes(b.2) };
            prop_assert_eq!(TgtPlain::decode(&pa.encode()).unwrap(), pa.clone());
            if pa != pb {
                prop_assert_ne!(pa.encode(), pb.encode());
            }
        }

        #[test]
        fn cgt_plain_round_trip(segs in prop::collection::vec("[a-z0-9]{1,5}", 1..5), t2 in any::<u64>(), k in any::<[u8; 32]>()) {
            let ns = Namespace::new(crate::names::Name::from_segments(segs).unwrap());
            let p = CgtPlain { ns, k_n: SymKey::from_bytes(k), t2 };
            prop_assert_eq!(CgtPlain::decode(&p.encode()).unwrap(), p);
        }
    }
}
