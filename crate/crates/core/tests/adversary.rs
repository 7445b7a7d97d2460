use std::time::Duration;

use krbccn::consumer::ConsumerError;
use krbccn::forwarder::FaceId;
use krbccn::harness::adversary::{leaks, recorded_interests, replay, ForgeTap, ReorderTap, TamperTap};
use krbccn::harness::testbed::{bench_uid, Testbed, CONTENT_SIZE};
use krbccn::harness::{Realm, Tap};
use krbccn::services::{ContentSource, SyntheticSource};
use krbccn::wire::PayloadDigest;
use krbccn::Name;

fn genuine(n: &Name) -> Vec<u8> {
    SyntheticSource { size: CONTENT_SIZE }.fetch(n, &[]).unwrap()
}

fn restricted_names(uid: &str, count: usize) -> Vec<Name> {
    (0..count)
        .map(|i| {
            if uid == "alice" && i % 2 == 1 {
                Name::parse(&format!("/edu/uni-X/ics/cs/private/f{i}")).unwrap()
            } else {
                Name::parse(&format!("/edu/uni-X/ics/cs/students/shared/f{i}")).unwrap()
            }
        })
        .collect()
}

fn realm_with(tb: &Testbed, tap: Box<dyn Tap>, deadline_ms: u64) -> Realm {
    let (mut options, _) = tb.deterministic_options();
    options.tap = Some(tap);
    options.concurrent_services = true;
    options.deadline = Some(Duration::from_millis(deadline_ms));
    tb.build(options).unwrap()
}

/// The face number the next `connect` will get on a freshly built testbed.
fn next_face(tb: &Testbed) -> FaceId {
    (2 + tb.config.producers.len() + tb.config.plain.len() + 1) as FaceId
}

/// Runs every user's requests concurrently and returns (successes, failures),
/// panicking on any success with the wrong bytes.
async fn drive(realm: &Realm, tb: &Testbed, uids: &[String], per_user: usize) -> (usize, Vec<ConsumerError>) {
    let now = realm.now();
    let mut set = tokio::task::JoinSet::new();
    let mut secrets = Vec::new();
    for uid in uids {
        let (c, _) = realm.consumer(realm.client_config(uid, tb.credentials(uid)));
        let names = restricted_names(uid, per_user);
        secrets.extend(c.secrets());
        set.spawn(async move {
            let mut out = Vec::new();
            for n in names {
                let r = c.request(&n, now).await;
                if let Ok(d) = &r {
                    assert_eq!(d, &genuine(&n), "corrupted content accepted for {n}");
                }
                out.push(r.map(|_| ()));
            }
            out
        });
    }
    let (mut ok, mut errs) = (0, Vec::new());
    while let Some(r) = set.join_next().await {
        for x in r.unwrap() {
            match x {
                Ok(()) => ok += 1,
                Err(e) => errs.push(e),
            }
        }
    }
    assert!(leaks(&realm.transcript().entries(), &secrets).is_empty(), "secret key on the wire");
    (ok, errs)
}

fn uids(n: usize) -> Vec<String> {
    std::iter::once("alice".to_owned()).chain((0..n).map(bench_uid)).collect()
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn tampering_never_yields_wrong_content() {
    let tb = Testbed::new(21, 3);
    let realm = realm_with(&tb, Box::new(TamperTap::new(21, 0.2, PayloadDigest::Sha256)), 300);
    let (ok, errs) = drive(&realm, &tb, &uids(3), 12).await;
    assert!(ok > 0, "nothing got through at a 20% tamper rate");
    assert!(!errs.is_empty(), "tampering had no visible effect");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn forged_replies_are_rejected() {
    let tb = Testbed::new(22, 2);
    let attacker = next_face(&tb);
    let realm = realm_with(&tb, Box::new(ForgeTap::new(22, attacker)), 500);
    let (face, _endpoint) = realm.connect("attacker");
    assert_eq!(face, attacker);
    let (ok, errs) = drive(&realm, &tb, &uids(2), 6).await;
    // The forgery always arrives first and consumes the pending interest.
    assert_eq!(ok, 0);
    assert_eq!(errs.len(), 18);
    for e in errs {
        assert!(
            matches!(e, ConsumerError::AuthFail | ConsumerError::Protocol(_)),
            "forgery surfaced as {e:?}"
        );
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn reordering_router_cannot_corrupt() {
    let tb = Testbed::new(23, 5);
    let realm = realm_with(&tb, Box::new(ReorderTap::new(23, 0.5, 0.2, 6)), 400);
    let (ok, _) = drive(&realm, &tb, &uids(5), 8).await;
    assert!(ok > 0);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn replayed_plain_mode_requests_leak_no_plaintext() {
    let tb = Testbed::new(24, 0);
    let (options, _) = tb.deterministic_options();
    let realm = tb.build(options).unwrap();
    let (alice, _) = realm.consumer(realm.client_config("alice", tb.credentials("alice")));
    let names = restricted_names("bob", 10);
    for n in &names {
        alice.request(n, realm.now()).await.unwrap();
    }
    let recorded = recorded_interests(&realm.transcript().entries(), "consumer:alice", PayloadDigest::Sha256);
    assert_eq!(recorded.len(), 12);
    let (_, attacker) = realm.connect("attacker");
    let replies = replay(attacker, recorded, Duration::from_secs(1)).await;
    assert_eq!(replies.len(), 12);
    for r in &replies {
        for n in &names {
            let marker = &genuine(n)[..32];
            assert!(!r.payload.windows(32).any(|w| w == marker), "replay returned plaintext of {n}");
        }
    }
}
