//! The reference testbed: one router, KAS, TGS, a producer of 10 KiB
//! restricted objects, a mutual-mode producer, a plain producer, a few named
//! users and an optional pool of bench users.

use std::collections::BTreeMap;
use std::path::Path;

use crate::consumer::Credentials;
use crate::crypto::{Crypto, KdfParams};
use crate::names::{Name, Namespace};
use crate::services::{PolicyStore, ProducerMode, UserAuth, UserStore};

use super::config::{
    ConsumerFile, PlainSection, ProducerSection, RealmConfig, RealmSection, RestrictedSection, RouterSection,
    ServiceSection, SourceSection,
};
use super::{HarnessError, Realm, RealmOptions};

pub const STUDENTS: &str = "/edu/uni-X/ics/cs/students/*";
pub const PRIVATE: &str = "/edu/uni-X/ics/cs/private/*";
pub const PUBLIC: &str = "/public";
pub const CONTENT_SIZE: usize = 10_240;
/// Protocol time the testbed's manual clock starts at.
pub const START: u64 = 1_700_000_000;
pub const DAVE_PASSWORD: &str = "correct horse battery staple";

#[derive(Debug, Clone)]
pub struct Testbed {
    pub config: RealmConfig,
    pub users: UserStore,
    pub policies: PolicyStore,
    pub credentials: BTreeMap<String, Credentials>,
    pub seed: u64,
}

pub fn bench_uid(i: usize) -> String {
    format!("user-{i}")
}

fn ns(s: &str) -> Namespace {
    Namespace::parse(s).expect("testbed namespace")
}

impl Testbed {
    /// Named users `alice`, `bob` (public keys) and `dave` (password), plus
    /// `bench_users` public-key users allowed under the students namespace.
    pub fn new(seed: u64, bench_users: usize) -> Self {
        let keys = Crypto::seeded(seed, "testbed-keys");
        let config = RealmConfig {
            realm: RealmSection {
                k_a: Some(keys.random_key().to_base64()),
                tgt_name: Name::parse("/realm/TGT").unwrap(),
                cgt_name: Name::parse("/realm/CGT").unwrap(),
                tgt_lifetime: crate::tickets::DEFAULT_TGT_LIFETIME,
                cgt_lifetime: crate::tickets::DEFAULT_CGT_LIFETIME,
                skew: crate::tickets::DEFAULT_SKEW,
                digest: Default::default(),
                users: None,
                policies: None,
            },
            router: RouterSection::default(),
            kas: ServiceSection::default(),
            tgs: ServiceSection::default(),
            producers: vec![
                ProducerSection {
                    namespace: ns(STUDENTS),
                    k_p: keys.random_key().to_base64(),
                    mode: ProducerMode::Plain,
                    prefix: None,
                    listen: None,
                    source: SourceSection::Synthetic { size: CONTENT_SIZE },
                },
                ProducerSection {
                    namespace: ns(PRIVATE),
                    k_p: keys.random_key().to_base64(),
                    mode: ProducerMode::Mutual,
                    prefix: None,
                    listen: None,
                    source: SourceSection::Synthetic { size: CONTENT_SIZE },
                },
            ],
            plain: vec![PlainSection {
                prefix: Name::parse(PUBLIC).unwrap(),
                expiry: 60,
                listen: None,
                source: SourceSection::Synthetic { size: CONTENT_SIZE },
            }],
        };

        let mut users = UserStore::new();
        let mut policies = PolicyStore::new();
        let mut credentials = BTreeMap::new();
        let mut add_pk = |uid: &str, grants: &[&str], users: &mut UserStore, policies: &mut PolicyStore| {
            let kp = keys.generate_keypair();
            users.insert(uid, UserAuth::PublicKey(kp.public)).unwrap();
            for g in grants {
                policies.add(uid, ns(g)).unwrap();
            }
            credentials.insert(uid.to_owned(), Credentials::SecretKey(kp.secret));
        };
        add_pk("alice", &[STUDENTS, PRIVATE], &mut users, &mut policies);
        add_pk("bob", &["/edu/uni-X/ics/cs/students/bob/*"], &mut users, &mut policies);
        for i in 0..bench_users {
            add_pk(&bench_uid(i), &[STUDENTS], &mut users, &mut policies);
        }
        let salt: [u8; 16] = keys.random_bytes(16).try_into().unwrap();
        users
            .insert("dave", UserAuth::password(DAVE_PASSWORD, salt, KdfParams::light()).unwrap())
            .unwrap();
        policies.add("dave", ns(STUDENTS)).unwrap();
        credentials.insert(
            "dave".to_owned(),
            Credentials::Password {
                password: DAVE_PASSWORD.to_owned(),
                salt,
                params: KdfParams::light(),
            },
        );

        Self {
            config,
            users,
            policies,
            credentials,
            seed,
        }
    }

    pub fn with_lifetimes(mut self, tgt: u64, cgt: u64) -> Self {
        self.config.realm.tgt_lifetime = tgt;
        self.config.realm.cgt_lifetime = cgt;
        self
    }

    pub fn credentials(&self, uid: &str) -> Credentials {
        self.credentials
            .get(uid)
            .cloned()
            .unwrap_or_else(|| panic!("testbed has no user {uid}"))
    }

    /// Starts the realm in process. Must be called inside a tokio runtime.
    pub fn build(&self, options: RealmOptions) -> Result<Realm, HarnessError> {
        Realm::build(&self.config, self.users.clone(), self.policies.clone(), options)
    }

    /// Options for reproducible runs: seeded randomness, a manual clock at
    /// [`START`], sequential services, recording on.
    pub fn deterministic_options(&self) -> (RealmOptions, std::sync::Arc<super::ManualClock>) {
        let clock = std::sync::Arc::new(super::ManualClock::new(START));
        let options = RealmOptions {
            seed: Some(self.seed),
            clock: clock.clone(),
            record: true,
            concurrent_services: false,
            tap: None,
            deadline: None,
        };
        (options, clock)
    }

    /// Writes a socket deployment to `dir`: `realm.toml`, the store files,
    /// a `public/` content tree and one `consumers/<uid>.toml` per named user.
    /// Services listen on consecutive ports from `base_port`.
    pub fn write_to(&self, dir: &Path, base_port: u16) -> Result<(), HarnessError> {
        let addr = |i: u16| format!("127.0.0.1:{}", base_port + i);
        let mut config = self.config.clone();
        config.realm.users = Some("users.txt".into());
        config.realm.policies = Some("policies.txt".into());
        config.router.listen = Some(addr(0));
        config.kas.listen = Some(addr(1));
        config.tgs.listen = Some(addr(2));
        let mut port = 3;
        for p in &mut config.producers {
            p.listen = Some(addr(port));
            port += 1;
        }
        for p in &mut config.plain {
            p.listen = Some(addr(port));
            p.source = SourceSection::Files { root: "public".into() };
            port += 1;
        }

        std::fs::create_dir_all(dir.join("consumers"))?;
        std::fs::create_dir_all(dir.join("public"))?;
        std::fs::write(dir.join("public").join("index.html"), "<h1>public</h1>\n")?;
        std::fs::write(dir.join("realm.toml"), config.render())?;
        std::fs::write(dir.join("users.txt"), self.users.render())?;
        std::fs::write(dir.join("policies.txt"), self.policies.render())?;

        let restricted: Vec<_> = config
            .producers
            .iter()
            .map(|p| RestrictedSection {
                prefix: p.namespace.clone(),
                request: None,
                mode: p.mode,
            })
            .collect();
        for uid in ["alice", "bob", "dave"] {
            let mut file = ConsumerFile {
                uid: uid.to_owned(),
                secret_key: None,
                password: None,
                salt: None,
                kdf: None,
                router: addr(0),
                deadline_ms: config.router.deadline_ms,
                skew: config.realm.skew,
                encrypt_namespace: false,
                digest: config.realm.digest,
                tgt_name: config.realm.tgt_name.clone(),
                cgt_name: config.realm.cgt_name.clone(),
                restricted: restricted.clone(),
            };
            match self.credentials(uid) {
                Credentials::SecretKey(sk) => file.secret_key = Some(sk.to_base64()),
                Credentials::Password { password, salt, params } => {
                    use base64::Engine;
                    file.password = Some(password);
                    file.salt = Some(base64::engine::general_purpose::STANDARD.encode(salt));
                    file.kdf = Some(params.to_string());
                }
            }
            std::fs::write(dir.join("consumers").join(format!("{uid}.toml")), file.render())?;
        }
        Ok(())
    }
}
