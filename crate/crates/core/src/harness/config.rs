//! TOML configuration for realms and consumers.
//!
//! Realm file:
//!
//! ```toml
//! [realm]
//! k_a = "<base64 32 bytes>"        # required, shared KAS/TGS key
//! tgt_name = "/realm/TGT"          # optional, default shown
//! cgt_name = "/realm/CGT"          # optional, default shown
//! tgt_lifetime = 28800             # seconds
//! cgt_lifetime = 3600              # seconds
//! skew = 30                        # seconds
//! digest = "sha256"                # or "sha512-256"
//! users = "users.txt"              # user store, relative to this file
//! policies = "policies.txt"        # policy store, relative to this file
//!
//! [router]
//! listen = "127.0.0.1:7000"        # only for socket deployments
//! cs_capacity = 1024               # 0 disables the content store
//! deadline_ms = 5000               # client exchange deadline
//!
//! [kas]
//! listen = "127.0.0.1:7001"
//!
//! [tgs]
//! listen = "127.0.0.1:7002"
//!
//! [[producer]]
//! namespace = "/edu/uni-X/ics/cs/students/*"
//! k_p = "<base64 32 bytes>"
//! mode = "plain"                   # or "mutual"
//! prefix = "/edu/uni-X/ics/cs/students"   # routable prefix, default: namespace prefix
//! listen = "127.0.0.1:7003"
//! source = { kind = "synthetic", size = 10240 }   # or { kind = "files", root = "content" }
//!
//! [[plain]]
//! prefix = "/public"
//! expiry = 60                      # ExpiryTime of plain replies, 0 = uncacheable
//! listen = "127.0.0.1:7004"
//! source = { kind = "files", root = "public" }
//! ```
//!
//! Consumer file:
//!
//! ```toml
//! uid = "alice"
//! secret_key = "<base64 32 bytes>"     # or: password + salt + kdf
//! # password = "..."
//! # salt = "<base64 16 bytes>"
//! # kdf = "m=19456,t=2,p=1"
//! router = "127.0.0.1:7000"
//! deadline_ms = 5000
//! skew = 30
//! encrypt_namespace = false
//! tgt_name = "/realm/TGT"
//! cgt_name = "/realm/CGT"
//!
//! [[restricted]]
//! prefix = "/edu/uni-X/ics/cs/students/alice/*"
//! request = "/edu/uni-X/ics/cs/students/alice/*"   # default: prefix
//! mode = "plain"
//! ```

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::consumer::{Credentials, RealmClientConfig, RestrictedNamespace};
use crate::crypto::{KdfParams, SecretKey, SymKey, SALT_LEN};
use crate::names::{Name, Namespace};
use crate::services::{
    ContentSource, FileRepository, PolicyStore, ProducerEntry, ProducerMode, ProducerRegistry, RealmNames,
    SyntheticSource, UserStore,
};
use crate::tickets::{Lifetimes, DEFAULT_CGT_LIFETIME, DEFAULT_SKEW, DEFAULT_TGT_LIFETIME};
use crate::wire::PayloadDigest;

use super::HarnessError;

fn default_tgt_name() -> Name {
    RealmNames::default().tgt_name
}

fn default_cgt_name() -> Name {
    RealmNames::default().cgt_name
}

fn default_tgt_lifetime() -> u64 {
    DEFAULT_TGT_LIFETIME
}

fn default_cgt_lifetime() -> u64 {
    DEFAULT_CGT_LIFETIME
}

fn default_skew() -> u64 {
    DEFAULT_SKEW
}

fn default_cs_capacity() -> usize {
    1024
}

fn default_deadline_ms() -> u64 {
    5000
}

fn default_plain_expiry() -> u64 {
    60
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RealmSection {
    #[serde(default)]
    pub k_a: Option<String>,
    #[serde(default = "default_tgt_name")]
    pub tgt_name: Name,
    #[serde(default = "default_cgt_name")]
    pub cgt_name: Name,
    #[serde(default = "default_tgt_lifetime")]
    pub tgt_lifetime: u64,
    #[serde(default = "default_cgt_lifetime")]
    pub cgt_lifetime: u64,
    #[serde(default = "default_skew")]
    pub skew: u64,
    #[serde(default)]
    pub digest: PayloadDigest,
    #[serde(default)]
    pub users: Option<PathBuf>,
    #[serde(default)]
    pub policies: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouterSection {
    #[serde(default)]
    pub listen: Option<String>,
    #[serde(default = "default_cs_capacity")]
    pub cs_capacity: usize,
    #[serde(default = "default_deadline_ms")]
    pub deadline_ms: u64,
}

impl Default for RouterSection {
    fn default() -> Self {
        Self {
            listen: None,
            cs_capacity: default_cs_capacity(),
            deadline_ms: default_deadline_ms(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceSection {
    #[serde(default)]
    pub listen: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SourceSection {
    Synthetic { size: usize },
    Files { root: PathBuf },
}

impl SourceSection {
    pub fn build(&self) -> Arc<dyn ContentSource> {
        match self {
            SourceSection::Synthetic { size } => Arc::new(SyntheticSource { size: *size }),
            SourceSection::Files { root } => Arc::new(FileRepository::new(root.clone())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProducerSection {
    pub namespace: Namespace,
    pub k_p: String,
    #[serde(default)]
    pub mode: ProducerMode,
    #[serde(default)]
    pub prefix: Option<Name>,
    #[serde(default)]
    pub listen: Option<String>,
    pub source: SourceSection,
}

impl ProducerSection {
    pub fn routable_prefix(&self) -> Name {
        self.prefix.clone().unwrap_or_else(|| self.namespace.prefix().clone())
    }

    pub fn key(&self) -> Result<SymKey, HarnessError> {
        SymKey::from_base64(&self.k_p)
            .map_err(|e| HarnessError::config(format!("producer {}: k_p: {e}", self.namespace)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlainSection {
    pub prefix: Name,
    #[serde(default = "default_plain_expiry")]
    pub expiry: u64,
    #[serde(default)]
    pub listen: Option<String>,
    pub source: SourceSection,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RealmConfig {
    pub realm: RealmSection,
    #[serde(default)]
    pub router: RouterSection,
    #[serde(default)]
    pub kas: ServiceSection,
    #[serde(default)]
    pub tgs: ServiceSection,
    #[serde(default, rename = "producer")]
    pub producers: Vec<ProducerSection>,
    #[serde(default, rename = "plain")]
    pub plain: Vec<PlainSection>,
}

impl RealmConfig {
    /// Parses and validates. Relative paths stay relative; see [`Self::load`].
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let config: RealmConfig = toml::from_str(text).map_err(|e| HarnessError::config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads `path` and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::config(format!("{}: {e}", path.display())))?;
        let mut config = Self::parse(&text)?;
        config.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(config)
    }

    pub fn render(&self) -> String {
        toml::to_string_pretty(self).expect("realm config serializes")
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = self.realm.users.as_mut() {
            fix(p);
        }
        if let Some(p) = self.realm.policies.as_mut() {
            fix(p);
        }
        let sources = self
            .producers
            .iter_mut()
            .map(|p| &mut p.source)
            .chain(self.plain.iter_mut().map(|p| &mut p.source));
        for s in sources {
            if let SourceSection::Files { root } = s {
                fix(root);
            }
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.k_a()?;
        let mut prefixes = HashSet::new();
        let mut claim = |p: &Name, what: String| {
            if prefixes.insert(p.clone()) {
                Ok(())
            } else {
                Err(HarnessError::config(format!("{what}: prefix {p} is routed twice")))
            }
        };
        claim(&self.realm.tgt_name, "tgt_name".into())?;
        claim(&self.realm.cgt_name, "cgt_name".into())?;
        let mut namespaces = HashSet::new();
        for p in &self.producers {
            p.key()?;
            if !namespaces.insert(p.namespace.clone()) {
                return Err(HarnessError::config(format!("two producers for {}", p.namespace)));
            }
            let prefix = p.routable_prefix();
            if !prefix.is_prefix_of(p.namespace.prefix()) {
                return Err(HarnessError::config(format!(
                    "producer {}: prefix {prefix} does not route its namespace",
                    p.namespace
                )));
            }
            claim(&prefix, format!("producer {}", p.namespace))?;
        }
        for p in &self.plain {
            claim(&p.prefix, format!("plain producer {}", p.prefix))?;
        }
        Ok(())
    }

    pub fn k_a(&self) -> Result<SymKey, HarnessError> {
        let text = self.realm.k_a.as_deref().ok_or_else(|| HarnessError::config("realm.k_a is missing"))?;
        SymKey::from_base64(text).map_err(|e| HarnessError::config(format!("realm.k_a: {e}")))
    }

    pub fn names(&self) -> RealmNames {
        RealmNames {
            tgt_name: self.realm.tgt_name.clone(),
            cgt_name: self.realm.cgt_name.clone(),
        }
    }

    pub fn lifetimes(&self) -> Lifetimes {
        Lifetimes {
            tgt: self.realm.tgt_lifetime,
            cgt: self.realm.cgt_lifetime,
            skew: self.realm.skew,
        }
    }

    pub fn registry(&self) -> Result<ProducerRegistry, HarnessError> {
        let mut reg = ProducerRegistry::new();
        for p in &self.producers {
            reg.register(ProducerEntry {
                namespace: p.namespace.clone(),
                producer: p.routable_prefix(),
                k_p: p.key()?,
            })?;
        }
        Ok(reg)
    }

    /// Loads the user and policy stores named in `[realm]`; absent files
    /// give empty stores.
    pub fn load_stores(&self) -> Result<(UserStore, PolicyStore), HarnessError> {
        let read = |p: &Option<PathBuf>| -> Result<String, HarnessError> {
            match p {
                None => Ok(String::new()),
                Some(p) => std::fs::read_to_string(p)
                    .map_err(|e| HarnessError::config(format!("{}: {e}", p.display()))),
            }
        };
        let users = UserStore::parse(&read(&self.realm.users)?)?;
        let policies = PolicyStore::parse(&read(&self.realm.policies)?)?;
        Ok((users, policies))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RestrictedSection {
    pub prefix: Namespace,
    #[serde(default)]
    pub request: Option<Namespace>,
    #[serde(default)]
    pub mode: ProducerMode,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConsumerFile {
    pub uid: String,
    #[serde(default)]
    pub secret_key: Option<String>,
    #[serde(default)]
    pub password: Option<String>,
    #[serde(default)]
    pub salt: Option<String>,
    #[serde(default)]
    pub kdf: Option<String>,
    pub router: String,
    #[serde(default = "default_deadline_ms")]
    pub deadline_ms: u64,
    #[serde(default = "default_skew")]
    pub skew: u64,
    #[serde(default)]
    pub encrypt_namespace: bool,
    #[serde(default)]
    pub digest: PayloadDigest,
    #[serde(default = "default_tgt_name")]
    pub tgt_name: Name,
    #[serde(default = "default_cgt_name")]
    pub cgt_name: Name,
    #[serde(default)]
    pub restricted: Vec<RestrictedSection>,
}

impl ConsumerFile {
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn render(&self) -> String {
        toml::to_string_pretty(self).expect("consumer config serializes")
    }

    pub fn credentials(&self) -> Result<Credentials, HarnessError> {
        match (&self.secret_key, &self.password) {
            (Some(sk), None) => SecretKey::from_base64(sk)
                .map(Credentials::SecretKey)
                .map_err(|e| HarnessError::config(format!("secret_key: {e}"))),
            (None, Some(password)) => {
                use base64::Engine;
                let salt = self.salt.as_deref().ok_or_else(|| HarnessError::config("password needs a salt"))?;
                let salt: [u8; SALT_LEN] = base64::engine::general_purpose::STANDARD
                    .decode(salt)
                    .ok()
                    .and_then(|s| s.try_into().ok())
                    .ok_or_else(|| HarnessError::config(format!("salt must be {SALT_LEN} base64 bytes")))?;
                let params: KdfParams = match &self.kdf {
                    Some(k) => k.parse().map_err(|e| HarnessError::config(format!("kdf: {e}")))?,
                    None => KdfParams::default(),
                };
                Ok(Credentials::Password {
                    password: password.clone(),
                    salt,
                    params,
                })
            }
            _ => Err(HarnessError::config("exactly one of secret_key or password is required")),
        }
    }

    pub fn client_config(&self) -> Result<RealmClientConfig, HarnessError> {
        Ok(RealmClientConfig {
            uid: self.uid.clone(),
            credentials: self.credentials()?,
            names: RealmNames {
                tgt_name: self.tgt_name.clone(),
                cgt_name: self.cgt_name.clone(),
            },
            restricted: self
                .restricted
                .iter()
                .map(|r| RestrictedNamespace {
                    prefix: r.prefix.clone(),
                    request: r.request.clone().unwrap_or_else(|| r.prefix.clone()),
                    mode: r.mode,
                })
                .collect(),
            skew: self.skew,
            encrypt_namespace: self.encrypt_namespace,
            digest: self.digest,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const KEY: &str = "AAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAA=";

    fn base() -> String {
        format!(
            r#"
[realm]
k_a = "{KEY}"

[[producer]]
namespace = "/edu/uni-X/ics/cs/students/*"
k_p = "{KEY}"
source = {{ kind = "synthetic", size = 10240 }}

[[plain]]
prefix = "/public"
source = {{ kind = "files", root = "pub" }}
"#
        )
    }

    fn config_error(text: &str) -> String {
        match RealmConfig::parse(text) {
            Err(HarnessError::Config(m)) => m,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn parses_with_defaults() {
        let c = RealmConfig::parse(&base()).unwrap();
        assert_eq!(c.names(), RealmNames::default());
        assert_eq!(c.lifetimes(), Lifetimes::default());
        assert_eq!(c.router.cs_capacity, 1024);
        assert_eq!(c.producers[0].mode, ProducerMode::Plain);
        assert_eq!(c.producers[0].routable_prefix(), Name::parse("/edu/uni-X/ics/cs/students").unwrap());
        assert_eq!(c.plain[0].expiry, 60);
        assert_eq!(c.registry().unwrap().entries().len(), 1);
        assert_eq!(RealmConfig::parse(&c.render()).unwrap(), c);
    }

    #[test]
    fn missing_k_a() {
        let text = base().replacen(&format!("k_a = \"{KEY}\""), "", 1);
        assert!(config_error(&text).contains("k_a"));
    }

    #[test]
    fn duplicate_producer_prefix() {
        let text = format!(
            "{}\n[[producer]]\nnamespace = \"/edu/uni-X/ics/cs/students/*\"\nk_p = \"{KEY}\"\nsource = {{ kind = \"synthetic\", size = 1 }}\n",
            base()
        );
        assert!(config_error(&text).contains("two producers"));

        let text = format!(
            "{}\n[[producer]]\nnamespace = \"/edu/uni-X/ics/cs/students/alice/*\"\nprefix = \"/edu/uni-X/ics/cs/students\"\nk_p = \"{KEY}\"\nsource = {{ kind = \"synthetic\", size = 1 }}\n",
            base()
        );
        assert!(config_error(&text).contains("routed twice"));
    }

    #[test]
    fn unroutable_producer() {
        let text = base().replace(
            "source = { kind = \"synthetic\"",
            "prefix = \"/elsewhere\"\nsource = { kind = \"synthetic\"",
        );
        assert!(config_error(&text).contains("does not route"));
    }

    #[test]
    fn relative_paths_resolve_against_the_file() {
        let mut c = RealmConfig::parse(&base()).unwrap();
        c.resolve_paths(Path::new("/etc/realm"));
        assert_eq!(c.plain[0].source, SourceSection::Files { root: "/etc/realm/pub".into() });
    }

    #[test]
    fn consumer_file() {
        let text = format!(
            r#"
uid = "alice"
secret_key = "{KEY}"
router = "127.0.0.1:7000"

[[restricted]]
prefix = "/edu/uni-X/ics/cs/students/alice/*"
mode = "mutual"
"#
        );
        let f = ConsumerFile::parse(&text).unwrap();
        let cfg = f.client_config().unwrap();
        assert_eq!(cfg.restricted[0].request, cfg.restricted[0].prefix);
        assert_eq!(cfg.restricted[0].mode, ProducerMode::Mutual);
        assert!(matches!(cfg.credentials, Credentials::SecretKey(_)));

        let both = text.replace("router", "password = \"pw\"\nrouter");
        assert!(ConsumerFile::parse(&both).unwrap().credentials().is_err());
    }
}
