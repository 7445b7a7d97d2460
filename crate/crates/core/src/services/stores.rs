//! Realm databases and their line-oriented text formats.
//!
//! `users`:
//! ```text
//! alice pk <base64 public key>
//! dave password <base64 salt> m=19456,t=2,p=1 <base64 derived key>
//! ```
//! `policies` (a uid line followed by its namespaces):
//! ```text
//! bob
//!   /edu/uni-X/ics/cs/faculty/bob/*
//!   /edu/uni-X/ics/cs/students/*
//! ```
//! `producers`:
//! ```text
//! /edu/uni-X/ics/cs/students/* /edu/uni-X/ics/cs/students <base64 k_P>
//! ```
//! Blank lines and lines starting with `#` are ignored everywhere.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use thiserror::Error;

use crate::crypto::{password_to_key, CryptoError, KdfParams, PublicKey, SymKey, SALT_LEN};
use crate::names::{Name, Namespace};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StoreError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate uid {0:?}")]
    DuplicateUser(String),
    #[error("namespace {0} is already registered")]
    DuplicateNamespace(Namespace),
    #[error("uid must be a non-empty token without whitespace")]
    BadUid,
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

fn parse_err(line: usize, message: impl Into<String>) -> StoreError {
    StoreError::Parse {
        line,
        message: message.into(),
    }
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn valid_uid(uid: &str) -> bool {
    !uid.is_empty() && !uid.starts_with('/') && !uid.chars().any(char::is_whitespace)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum UserAuth {
    PublicKey(PublicKey),
    Password {
        salt: [u8; SALT_LEN],
        params: KdfParams,
        key: SymKey,
    },
}

impl UserAuth {
    pub fn password(password: &str, salt: [u8; SALT_LEN], params: KdfParams) -> Result<Self, CryptoError> {
        let key = password_to_key(password, &salt, &params)?;
        Ok(UserAuth::Password { salt, params, key })
    }
}

#[derive(Debug, Clone, Default)]
pub struct UserStore {
    users: BTreeMap<String, UserAuth>,
}

impl UserStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, uid: &str, auth: UserAuth) -> Result<(), StoreError> {
        if !valid_uid(uid) {
            return Err(StoreError::BadUid);
        }
        if self.users.contains_key(uid) {
            return Err(StoreError::DuplicateUser(uid.to_owned()));
        }
        self.users.insert(uid.to_owned(), auth);
        Ok(())
    }

    pub fn get(&self, uid: &str) -> Option<&UserAuth> {
        self.users.get(uid)
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    pub fn uids(&self) -> impl Iterator<Item = &str> {
        self.users.keys().map(String::as_str)
    }

    pub fn parse(text: &str) -> Result<Self, StoreError> {
        let mut store = Self::new();
        for (line, l) in content_lines(text) {
            let fields: Vec<&str> = l.split_whitespace().collect();
            let auth = match fields.as_slice() {
                [_, "pk", key] => UserAuth::PublicKey(
                    PublicKey::from_base64(key).map_err(|e| parse_err(line, e.to_string()))?,
                ),
                [_, "password", salt, params, key] => {
                    let salt = B64.decode(salt).map_err(|e| parse_err(line, e.to_string()))?;
                    let salt: [u8; SALT_LEN] = salt
                        .try_into()
                        .map_err(|_| parse_err(line, "salt must be 16 bytes"))?;
                    UserAuth::Password {
                        salt,
                        params: params.parse().map_err(|e: CryptoError| parse_err(line, e.to_string()))?,
                        key: SymKey::from_base64(key).map_err(|e| parse_err(line, e.to_string()))?,
                    }
                }
                _ => return Err(parse_err(line, "expected `uid pk KEY` or `uid password SALT PARAMS KEY`")),
            };
            store.insert(fields[0], auth).map_err(|e| parse_err(line, e.to_string()))?;
        }
        Ok(store)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (uid, auth) in &self.users {
            match auth {
                UserAuth::PublicKey(pk) => writeln!(out, "{uid} pk {}", pk.to_base64()),
                UserAuth::Password { salt, params, key } => writeln!(
                    out,
                    "{uid} password {} {params} {}",
                    B64.encode(salt),
                    key.to_base64()
                ),
            }
            .unwrap();
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PolicyStore {
    rules: BTreeMap<String, BTreeSet<Namespace>>,
}

impl PolicyStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, uid: &str, ns: Namespace) -> Result<(), StoreError> {
        if !valid_uid(uid) {
            return Err(StoreError::BadUid);
        }
        self.rules.entry(uid.to_owned()).or_default().insert(ns);
        Ok(())
    }

    pub fn namespaces(&self, uid: &str) -> impl Iterator<Item = &Namespace> {
        self.rules.get(uid).into_iter().flatten()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Namespace)> {
        self.rules
            .iter()
            .flat_map(|(uid, set)| set.iter().map(move |ns| (uid.as_str(), ns)))
    }

    /// True iff some policy of `uid` covers `requested`.
    pub fn allows(&self, uid: &str, requested: &Namespace) -> bool {
        self.namespaces(uid).any(|p| p.covers(requested))
    }

    pub fn parse(text: &str) -> Result<Self, StoreError> {
        let mut store = Self::new();
        let mut current: Option<&str> = None;
        for (line, l) in content_lines(text) {
            if l.starts_with('/') {
                let uid = current.ok_or_else(|| parse_err(line, "namespace before any uid"))?;
                let ns = Namespace::parse(l).map_err(|e| parse_err(line, e.to_string()))?;
                store.add(uid, ns).map_err(|e| parse_err(line, e.to_string()))?;
            } else {
                if !valid_uid(l) {
                    return Err(parse_err(line, "bad uid"));
                }
                current = Some(l);
                store.rules.entry(l.to_owned()).or_default();
            }
        }
        Ok(store)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (uid, set) in &self.rules {
            writeln!(out, "{uid}").unwrap();
            for ns in set {
                writeln!(out, "  {ns}").unwrap();
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProducerEntry {
    pub namespace: Namespace,
    pub producer: Name,
    pub k_p: SymKey,
}

#[derive(Debug, Clone, Default)]
pub struct ProducerRegistry {
    entries: Vec<ProducerEntry>,
}

impl ProducerRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, entry: ProducerEntry) -> Result<(), StoreError> {
        if self.entries.iter().any(|e| e.namespace == entry.namespace) {
            return Err(StoreError::DuplicateNamespace(entry.namespace));
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn entries(&self) -> &[ProducerEntry] {
        &self.entries
    }

    /// Entry with the longest namespace prefix covering `requested`.
    pub fn longest_covering(&self, requested: &Namespace) -> Option<&ProducerEntry> {
        self.entries
            .iter()
            .filter(|e| e.namespace.covers(requested))
            .max_by_key(|e| e.namespace.prefix().len())
    }

    pub fn parse(text: &str) -> Result<Self, StoreError> {
        let mut reg = Self::new();
        for (line, l) in content_lines(text) {
            let fields: Vec<&str> = l.split_whitespace().collect();
            let [ns, producer, key] = fields.as_slice() else {
                return Err(parse_err(line, "expected `NAMESPACE PRODUCER KEY`"));
            };
            let entry = ProducerEntry {
                namespace: Namespace::parse(ns).map_err(|e| parse_err(line, e.to_string()))?,
                producer: Name::parse(producer).map_err(|e| parse_err(line, e.to_string()))?,
                k_p: SymKey::from_base64(key).map_err(|e| parse_err(line, e.to_string()))?,
            };
            reg.register(entry).map_err(|e| parse_err(line, e.to_string()))?;
        }
        Ok(reg)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            writeln!(out, "{} {} {}", e.namespace, e.producer, e.k_p.to_base64()).unwrap();
        }
        out
    }
}
