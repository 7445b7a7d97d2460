use std::sync::{Arc, RwLock};
use std::time::Duration;

use crate::consumer::{Consumer, Credentials, RealmClientConfig, RestrictedNamespace};
use crate::crypto::Crypto;
use crate::forwarder::FaceId;
use crate::services::{Kas, PlainProducer, PolicyStore, Producer, Service, Tgs, UserStore};

use super::config::RealmConfig;
use super::{serve, ClientTransport, Clock, CountingTransport, Endpoint, HarnessError, RouterNode, SystemClock, Tap, Transcript};

pub struct RealmOptions {
    /// Derive every entity's randomness from this seed.
    pub seed: Option<u64>,
    pub clock: Arc<dyn Clock>,
    /// Record every message crossing the router.
    pub record: bool,
    /// Handle each interest on its own task. Off gives arrival-order service.
    pub concurrent_services: bool,
    pub tap: Option<Box<dyn Tap>>,
    /// `None` takes the configured router deadline.
    pub deadline: Option<Duration>,
}

impl Default for RealmOptions {
    fn default() -> Self {
        Self {
            seed: None,
            clock: Arc::new(SystemClock),
            record: false,
            concurrent_services: false,
            tap: None,
            deadline: None,
        }
    }
}

/// Every service a realm configuration describes, not yet attached to
/// anything.
pub struct ServiceSet {
    pub kas: Arc<Kas>,
    pub tgs: Arc<Tgs>,
    pub producers: Vec<Arc<Producer>>,
    pub plain: Vec<Arc<PlainProducer>>,
}

impl ServiceSet {
    /// `crypto` gives each entity its randomness by label.
    pub fn build(
        config: &RealmConfig,
        users: Arc<RwLock<UserStore>>,
        policies: Arc<RwLock<PolicyStore>>,
        crypto: &dyn Fn(&str) -> Crypto,
    ) -> Result<Self, HarnessError> {
        let k_a = config.k_a()?;
        let lifetimes = config.lifetimes();
        let registry = Arc::new(RwLock::new(config.registry()?));
        let kas = Arc::new(Kas::new(
            config.realm.tgt_name.clone(),
            k_a.clone(),
            users,
            lifetimes,
            crypto("kas"),
        ));
        let tgs = Arc::new(Tgs::new(
            config.realm.cgt_name.clone(),
            k_a,
            policies,
            registry,
            lifetimes,
            crypto("tgs"),
        ));
        let mut producers = Vec::new();
        for p in &config.producers {
            producers.push(Arc::new(Producer::new(
                p.namespace.clone(),
                p.key()?,
                p.mode,
                p.source.build(),
                lifetimes.skew,
                crypto(&format!("producer:{}", p.namespace)),
            )));
        }
        let plain = config
            .plain
            .iter()
            .map(|p| Arc::new(PlainProducer::new(p.prefix.clone(), p.source.build(), p.expiry)))
            .collect();
        Ok(Self { kas, tgs, producers, plain })
    }
}

/// A realm running in this process: one router task plus one task per
/// service, all connected by in-memory faces.
pub struct Realm {
    config: RealmConfig,
    clock: Arc<dyn Clock>,
    router: RouterNode,
    transcript: Transcript,
    kas: Arc<Kas>,
    tgs: Arc<Tgs>,
    producers: Vec<Arc<Producer>>,
    plain: Vec<Arc<PlainProducer>>,
    users: Arc<RwLock<UserStore>>,
    policies: Arc<RwLock<PolicyStore>>,
    seed: Option<u64>,
    deadline: Duration,
    faces: RwLock<Vec<(FaceId, String)>>,
}

impl Realm {
    /// Must be called inside a tokio runtime.
    pub fn build(
        config: &RealmConfig,
        users: UserStore,
        policies: PolicyStore,
        options: RealmOptions,
    ) -> Result<Self, HarnessError> {
        config.validate()?;
        let RealmOptions {
            seed,
            clock,
            record,
            concurrent_services,
            tap,
            deadline,
        } = options;
        let crypto = |label: &str| seed.map(|s| Crypto::seeded(s, label)).unwrap_or_default();
        let users = Arc::new(RwLock::new(users));
        let policies = Arc::new(RwLock::new(policies));

        let transcript = Transcript::default();
        let router = RouterNode::spawn(
            config.router.cs_capacity,
            clock.clone(),
            record.then(|| transcript.clone()),
            tap,
        );
        let faces = RwLock::new(Vec::new());
        let mount = |label: String, prefix: &crate::names::Name, service: Arc<dyn Service>| {
            let (face, endpoint) = router.connect(label.clone());
            router.route(prefix.clone(), face);
            serve(endpoint, service, clock.clone(), concurrent_services);
            faces.write().unwrap().push((face, label));
        };

        let set = ServiceSet::build(config, users.clone(), policies.clone(), &crypto)?;
        mount("kas".into(), &config.realm.tgt_name, set.kas.clone());
        mount("tgs".into(), &config.realm.cgt_name, set.tgs.clone());
        for (p, producer) in config.producers.iter().zip(&set.producers) {
            mount(format!("producer:{}", p.namespace), &p.routable_prefix(), producer.clone());
        }
        for (p, producer) in config.plain.iter().zip(&set.plain) {
            mount(format!("plain:{}", p.prefix), &p.prefix, producer.clone());
        }
        let ServiceSet { kas, tgs, producers, plain } = set;

        Ok(Self {
            config: config.clone(),
            clock,
            router,
            transcript,
            kas,
            tgs,
            producers,
            plain,
            users,
            policies,
            seed,
            deadline: deadline.unwrap_or(Duration::from_millis(config.router.deadline_ms)),
            faces,
        })
    }

    pub fn config(&self) -> &RealmConfig {
        &self.config
    }

    pub fn now(&self) -> u64 {
        self.clock.now()
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    pub fn router(&self) -> &RouterNode {
        &self.router
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn kas(&self) -> &Arc<Kas> {
        &self.kas
    }

    pub fn tgs(&self) -> &Arc<Tgs> {
        &self.tgs
    }

    pub fn producers(&self) -> &[Arc<Producer>] {
        &self.producers
    }

    pub fn plain_producers(&self) -> &[Arc<PlainProducer>] {
        &self.plain
    }

    pub fn users(&self) -> &Arc<RwLock<UserStore>> {
        &self.users
    }

    pub fn policies(&self) -> &Arc<RwLock<PolicyStore>> {
        &self.policies
    }

    pub fn deadline(&self) -> Duration {
        self.deadline
    }

    /// Randomness for an entity, seeded when the realm is.
    pub fn crypto(&self, label: &str) -> Crypto {
        self.seed.map(|s| Crypto::seeded(s, label)).unwrap_or_default()
    }

    /// Faces in attachment order with their labels.
    pub fn faces(&self) -> Vec<(FaceId, String)> {
        self.faces.read().unwrap().clone()
    }

    pub fn face_label(&self, face: FaceId) -> Option<String> {
        self.faces.read().unwrap().iter().find(|(f, _)| *f == face).map(|(_, l)| l.clone())
    }

    /// A raw face on the router, e.g. for an adversary.
    pub fn connect(&self, label: &str) -> (FaceId, Endpoint) {
        let (face, endpoint) = self.router.connect(label);
        self.faces.write().unwrap().push((face, label.to_owned()));
        (face, endpoint)
    }

    /// Client settings matching this realm, restricting every producer
    /// namespace in its configured mode.
    pub fn client_config(&self, uid: &str, credentials: Credentials) -> RealmClientConfig {
        let mut cfg = RealmClientConfig::new(uid, credentials);
        cfg.names = self.config.names();
        cfg.skew = self.config.realm.skew;
        cfg.digest = self.config.realm.digest;
        cfg.restricted = self
            .producers
            .iter()
            .map(|p| RestrictedNamespace {
                prefix: p.namespace().clone(),
                request: p.namespace().clone(),
                mode: p.mode(),
            })
            .collect();
        cfg
    }

    /// A consumer on its own face, plus the counter of its exchanges.
    pub fn consumer(&self, config: RealmClientConfig) -> (Consumer, Arc<CountingTransport<ClientTransport>>) {
        let label = format!("consumer:{}", config.uid);
        let (_, endpoint) = self.connect(&label);
        let wire = Arc::new(CountingTransport::new(ClientTransport::new(endpoint, self.deadline)));
        let crypto = self.crypto(&label);
        (Consumer::new(config, wire.clone(), crypto), wire)
    }
}
