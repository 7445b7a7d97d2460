use std::sync::Arc;

use krbccn::consumer::{ConsumerError, Credentials, ExchangeCounts};
use krbccn::harness::config::RealmConfig;
use krbccn::harness::testbed::{Testbed, CONTENT_SIZE, PRIVATE, START, STUDENTS};
use krbccn::harness::{net, ClientTransport, HarnessError, SystemClock};
use krbccn::services::{ContentSource, SyntheticSource};
use krbccn::{ErrorCode, Name, Namespace};

fn name(s: &str) -> Name {
    Name::parse(s).unwrap()
}

fn img() -> Name {
    name("/edu/uni-X/ics/cs/students/alice/images/img1.png")
}

fn expected(n: &Name) -> Vec<u8> {
    SyntheticSource { size: CONTENT_SIZE }.fetch(n, &[]).unwrap()
}

fn phases(auth: u64, authz: u64, content: u64, challenge: u64) -> ExchangeCounts {
    ExchangeCounts { authentication: auth, authorization: authz, content, challenge, plain: 0 }
}

#[tokio::test]
async fn cold_warm_tgt_warm_cgt() {
    let tb = Testbed::new(1, 0);
    let (options, _) = tb.deterministic_options();
    let realm = tb.build(options).unwrap();
    let (alice, wire) = realm.consumer(realm.client_config("alice", tb.credentials("alice")));
    let now = realm.now();

    assert_eq!(alice.request(&img(), now).await.unwrap(), expected(&img()));
    assert_eq!(alice.exchanges(), phases(1, 1, 1, 0));
    assert_eq!(wire.count(), 3);

    alice.request(&name("/edu/uni-X/ics/cs/students/alice/notes.txt"), now).await.unwrap();
    assert_eq!(wire.count(), 4);

    alice.forget_cgt(&Namespace::parse(STUDENTS).unwrap());
    alice.request(&img(), now).await.unwrap();
    assert_eq!(alice.exchanges(), phases(1, 2, 3, 0));
    assert_eq!(wire.count(), 6);
}

#[tokio::test]
async fn mutual_mode_adds_one_exchange() {
    let tb = Testbed::new(2, 0);
    let (options, _) = tb.deterministic_options();
    let realm = tb.build(options).unwrap();
    let (alice, wire) = realm.consumer(realm.client_config("alice", tb.credentials("alice")));
    let now = realm.now();
    let diary = name("/edu/uni-X/ics/cs/private/alice/diary");
    assert_eq!(alice.request(&diary, now).await.unwrap(), expected(&diary));
    assert_eq!(wire.count(), 4);
    assert_eq!(alice.request(&diary, now).await.unwrap(), expected(&diary));
    assert_eq!(wire.count(), 6);
    assert_eq!(alice.exchanges(), phases(1, 1, 2, 2));
    assert_eq!(realm.producers()[1].produce_calls(), 2);
    assert_eq!(realm.producers()[1].pending_challenges(), 0);

    // Forced mutual against a plain-mode producer is not downgraded.
    let err = alice.request_mutual(&img(), now).await.unwrap_err();
    assert!(matches!(err, ConsumerError::AuthFail | ConsumerError::Protocol(_)), "{err:?}");
}

#[tokio::test]
async fn password_user() {
    let tb = Testbed::new(3, 0);
    let (options, _) = tb.deterministic_options();
    let realm = tb.build(options).unwrap();
    let (dave, _) = realm.consumer(realm.client_config("dave", tb.credentials("dave")));
    let now = realm.now();
    let n = name("/edu/uni-X/ics/cs/students/dave/thesis.pdf");
    assert_eq!(dave.request(&n, now).await.unwrap(), expected(&n));

    let Credentials::Password { salt, params, .. } = tb.credentials("dave") else { unreachable!() };
    let wrong = Credentials::Password { password: "wrong".into(), salt, params };
    let (eve, _) = realm.consumer(realm.client_config("dave", wrong));
    assert_eq!(eve.request(&n, now).await.unwrap_err(), ConsumerError::AuthFail);
    assert!(eve.cache().tgt.is_none());
}

#[tokio::test]
async fn unknown_and_unauthorized() {
    let tb = Testbed::new(4, 0);
    let (options, _) = tb.deterministic_options();
    let realm = tb.build(options).unwrap();
    let now = realm.now();

    let (mallory, _) = realm.consumer(realm.client_config("mallory", tb.credentials("alice")));
    assert_eq!(mallory.request(&img(), now).await.unwrap_err().code(), Some(ErrorCode::UnknownUser));

    let (bob, wire) = realm.consumer(realm.client_config("bob", tb.credentials("bob")));
    let err = bob.request(&img(), now).await.unwrap_err();
    assert_eq!(err.code(), Some(ErrorCode::NotAuthorized));
    assert!(bob.cache().cgts.is_empty());
    assert_eq!(wire.count(), 2);

    let mine = Namespace::parse("/edu/uni-X/ics/cs/students/bob/*").unwrap();
    let entry = bob.authorize(&mine, now).await.unwrap();
    assert!(entry.t2 > now);
    assert_eq!(bob.cache().cgts.len(), 1);
}

#[tokio::test]
async fn expired_tgt_is_renewed_transparently() {
    let tb = Testbed::new(5, 0);
    let (options, clock) = tb.deterministic_options();
    let realm = tb.build(options).unwrap();
    let (alice, wire) = realm.consumer(realm.client_config("alice", tb.credentials("alice")));
    alice.authenticate(START).await.unwrap();
    assert_eq!(wire.count(), 1);

    // The consumer's clock lags, so it still trusts its TGT.
    clock.advance(9 * 3600);
    alice.request(&img(), START).await.unwrap();
    // CGT (rejected) + TGT + CGT + content.
    assert_eq!(wire.count(), 5);
    assert_eq!(alice.exchanges(), phases(2, 2, 1, 0));
}

#[tokio::test]
async fn expired_cgt_is_renewed_transparently() {
    let tb = Testbed::new(6, 0);
    let (options, clock) = tb.deterministic_options();
    let realm = tb.build(options).unwrap();
    let (alice, wire) = realm.consumer(realm.client_config("alice", tb.credentials("alice")));
    alice.request(&img(), START).await.unwrap();
    clock.advance(2 * 3600);
    alice.request(&img(), START).await.unwrap();
    // content (rejected) + CGT + content.
    assert_eq!(wire.count(), 6);
    assert_eq!(alice.exchanges(), phases(1, 2, 3, 0));
}

#[tokio::test]
async fn local_expiry_triggers_refresh() {
    let tb = Testbed::new(7, 0);
    let (options, clock) = tb.deterministic_options();
    let realm = tb.build(options).unwrap();
    let (alice, wire) = realm.consumer(realm.client_config("alice", tb.credentials("alice")));
    alice.request(&img(), START).await.unwrap();
    let t2 = alice.cache().cgts.values().next().unwrap().t2;
    clock.set(t2 - 29);
    alice.request(&img(), t2 - 29).await.unwrap();
    assert_eq!(wire.count(), 5, "within skew of t2 the CGT is no longer used");
}

#[tokio::test]
async fn single_flight_per_namespace() {
    let tb = Testbed::new(8, 0);
    let (mut options, _) = tb.deterministic_options();
    options.concurrent_services = true;
    let realm = tb.build(options).unwrap();
    let (alice, wire) = realm.consumer(realm.client_config("alice", tb.credentials("alice")));
    let alice = Arc::new(alice);
    let now = realm.now();
    let mut set = tokio::task::JoinSet::new();
    for i in 0..16 {
        let alice = alice.clone();
        set.spawn(async move {
            let n = name(&format!("/edu/uni-X/ics/cs/students/alice/f{i}"));
            alice.request(&n, now).await.map(|d| d == expected(&n))
        });
    }
    while let Some(r) = set.join_next().await {
        assert!(r.unwrap().unwrap());
    }
    assert_eq!(alice.exchanges(), phases(1, 1, 16, 0));
    assert_eq!(wire.count(), 18);
}

#[tokio::test]
async fn plain_content_is_returned_verbatim() {
    let tb = Testbed::new(9, 0);
    let (options, _) = tb.deterministic_options();
    let realm = tb.build(options).unwrap();
    let (alice, wire) = realm.consumer(realm.client_config("alice", tb.credentials("alice")));
    let news = name("/public/news");
    assert_eq!(alice.request(&news, realm.now()).await.unwrap(), expected(&news));
    assert_eq!(wire.count(), 1);
    assert!(alice.cache().tgt.is_none());
    let counters = realm.router().counters().await;
    assert_eq!(counters.cached, 1);
}

async fn scenario(seed: u64) -> Vec<krbccn::harness::TranscriptEntry> {
    let tb = Testbed::new(seed, 0);
    let (options, _) = tb.deterministic_options();
    let realm = tb.build(options).unwrap();
    let (alice, _) = realm.consumer(realm.client_config("alice", tb.credentials("alice")));
    let (dave, _) = realm.consumer(realm.client_config("dave", tb.credentials("dave")));
    let now = realm.now();
    alice.request(&img(), now).await.unwrap();
    alice.request(&name("/edu/uni-X/ics/cs/private/x"), now).await.unwrap();
    dave.request(&name("/edu/uni-X/ics/cs/students/dave/y"), now).await.unwrap();
    alice.request(&name("/public/z"), now).await.unwrap();
    realm.transcript().entries()
}

#[tokio::test]
async fn seeded_runs_have_identical_transcripts() {
    let a = scenario(11).await;
    let b = scenario(11).await;
    assert_eq!(a.len(), 4 * (3 + 3 + 3 + 1));
    assert_eq!(a, b);
    assert_ne!(a, scenario(12).await);
}

#[tokio::test]
async fn encrypted_namespace_requests() {
    let tb = Testbed::new(10, 0);
    let (options, _) = tb.deterministic_options();
    let realm = tb.build(options).unwrap();
    let mut cfg = realm.client_config("alice", tb.credentials("alice"));
    cfg.encrypt_namespace = true;
    let (alice, _) = realm.consumer(cfg);
    alice.request(&img(), realm.now()).await.unwrap();
    let to_tgs: Vec<_> = realm
        .transcript()
        .entries()
        .into_iter()
        .filter(|e| e.label == "tgs")
        .collect();
    assert!(!to_tgs.is_empty());
    assert!(to_tgs.iter().all(|e| !e.contains(STUDENTS.trim_end_matches("/*").as_bytes())));
}

#[tokio::test]
async fn unroutable_request_times_out() {
    let tb = Testbed::new(12, 0);
    let (mut options, _) = tb.deterministic_options();
    options.deadline = Some(std::time::Duration::from_millis(50));
    let realm = tb.build(options).unwrap();
    let (alice, _) = realm.consumer(realm.client_config("alice", tb.credentials("alice")));
    assert_eq!(alice.request(&name("/nowhere/x"), realm.now()).await.unwrap_err(), ConsumerError::Timeout);
}

#[test]
fn config_errors() {
    let tb = Testbed::new(13, 0);
    let mut config = tb.config.clone();
    config.realm.k_a = None;
    assert!(matches!(RealmConfig::parse(&config.render()), Err(HarnessError::Config(_))));
    let mut config = tb.config.clone();
    let dup = config.producers[0].clone();
    config.producers.push(dup);
    let err = RealmConfig::parse(&config.render()).unwrap_err();
    assert!(err.to_string().starts_with("E_CONFIG"), "{err}");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn socket_deployment_end_to_end() {
    let mut tb = Testbed::new(14, 0);
    tb.config.router.listen = Some("127.0.0.1:0".into());
    tb.config.kas.listen = Some("127.0.0.1:0".into());
    tb.config.tgs.listen = Some("127.0.0.1:0".into());
    for p in &mut tb.config.producers {
        p.listen = Some("127.0.0.1:0".into());
    }
    for p in &mut tb.config.plain {
        p.listen = Some("127.0.0.1:0".into());
    }
    let (addr, _) = net::start_all(&tb.config, tb.users.clone(), tb.policies.clone(), Arc::new(SystemClock), None)
        .await
        .unwrap();

    let transport: ClientTransport =
        net::client_transport(&addr.to_string(), std::time::Duration::from_secs(5), Default::default())
            .await
            .unwrap();
    let mut cfg = krbccn::consumer::RealmClientConfig::new("alice", tb.credentials("alice"));
    cfg.restrict_all([STUDENTS, PRIVATE]);
    let alice = krbccn::consumer::Consumer::new(cfg, Arc::new(transport), Default::default());
    let now = krbccn::harness::Clock::now(&SystemClock);
    assert_eq!(alice.request(&img(), now).await.unwrap(), expected(&img()));
    let diary = name("/edu/uni-X/ics/cs/private/alice/diary");
    assert_eq!(alice.request(&diary, now).await.unwrap(), expected(&diary));
    assert_eq!(alice.exchanges(), phases(1, 2, 2, 1));
}

trait RestrictAll {
    fn restrict_all<const N: usize>(&mut self, namespaces: [&str; N]);
}

impl RestrictAll for krbccn::consumer::RealmClientConfig {
    fn restrict_all<const N: usize>(&mut self, namespaces: [&str; N]) {
        for ns in namespaces {
            let entry = krbccn::consumer::RestrictedNamespace::new(Namespace::parse(ns).unwrap());
            let entry = if ns == PRIVATE { entry.mutual() } else { entry };
            self.restricted.push(entry);
        }
    }
}
