//! Benchmarks over the in-process testbed.
//!
//! Every bench returns a [`BenchReport`], serialized as JSON:
//!
//! ```json
//! {
//!   "schema": "krbccn-bench/1",
//!   "kind": "caching" | "handlers" | "rtt",
//!   "seed": 42,
//!   "handlers":   [{ "handler": "kas-pk", "samples": 1000, "min_us": 1.0, "median_us": 1.0,
//!                    "p95_us": 1.0, "mean_us": 1.0, "ops_per_call": { "pk_enc": 1.0, ... },
//!                    "reply_bytes": 212 }],
//!   "rtt":        [{ "kind": "tgt" | "cgt" | "content" | "plain", "concurrent": 300,
//!                    "samples": 300, "mean_us": 1.0, "min_us": 1.0, "median_us": 1.0,
//!                    "p95_us": 1.0, "max_us": 1.0 }],
//!   "rtt_overhead_ratio": 1.6,
//!   "throughput": [{ "policy": "both-cached" | "tgt-only" | "none", "requests": 1000,
//!                    "elapsed_s": 0.5, "requests_per_s": 2000.0,
//!                    "exchanges": { "authentication": 1, "authorization": 1, "content": 1000,
//!                                   "challenge": 0, "plain": 0 },
//!                    "total_exchanges": 1002, "wire_exchanges": 1002 }],
//!   "crypto": [{ "entity": "kas", "counts": { "pk_enc": 1, "pk_dec": 0, "sym_enc": 1, "sym_dec": 0 } }]
//! }
//! ```
//!
//! Distribution fields are `null` when there are no samples.

use std::fmt::Write as _;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::consumer::{Consumer, ExchangeCounts};
use crate::crypto::OpCounts;
use crate::names::{Name, Namespace};
use crate::services::{RealmNames, KIND_CGT};
use crate::tickets::{seal_cgt, seal_tgt, CgtPlain, TgtPlain};
use crate::wire::{attach_payload, Interest};

use super::testbed::{bench_uid, Testbed, CONTENT_SIZE, PUBLIC, STUDENTS};
use super::{HarnessError, ManualClock};

pub const SCHEMA: &str = "krbccn-bench/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CachingPolicy {
    BothCached,
    TgtOnly,
    None,
}

impl CachingPolicy {
    pub const ALL: [CachingPolicy; 3] = [CachingPolicy::BothCached, CachingPolicy::TgtOnly, CachingPolicy::None];

    pub fn as_str(self) -> &'static str {
        match self {
            CachingPolicy::BothCached => "both-cached",
            CachingPolicy::TgtOnly => "tgt-only",
            CachingPolicy::None => "none",
        }
    }

    /// Exchanges for `requests` sequential retrievals from a cold cache.
    pub fn expected_exchanges(self, requests: u64) -> u64 {
        if requests == 0 {
            return 0;
        }
        match self {
            CachingPolicy::BothCached => requests + 2,
            CachingPolicy::TgtOnly => 2 * requests + 1,
            CachingPolicy::None => 3 * requests,
        }
    }
}

impl std::str::FromStr for CachingPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown caching policy {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct OpsPerCall {
    pub pk_enc: f64,
    pub pk_dec: f64,
    pub sym_enc: f64,
    pub sym_dec: f64,
}

impl OpsPerCall {
    fn from_counts(c: OpCounts, calls: usize) -> Self {
        if calls == 0 {
            return Self::default();
        }
        let n = calls as f64;
        Self {
            pk_enc: c.pk_enc as f64 / n,
            pk_dec: c.pk_dec as f64 / n,
            sym_enc: c.sym_enc as f64 / n,
            sym_dec: c.sym_dec as f64 / n,
        }
    }
}

/// Summary of a set of durations, in microseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub samples: usize,
    pub min_us: Option<f64>,
    pub median_us: Option<f64>,
    pub p95_us: Option<f64>,
    pub mean_us: Option<f64>,
    pub max_us: Option<f64>,
}

impl Distribution {
    pub fn from_durations(samples: &[Duration]) -> Self {
        let mut us: Vec<f64> = samples.iter().map(|d| d.as_secs_f64() * 1e6).collect();
        us.sort_by(f64::total_cmp);
        let n = us.len();
        if n == 0 {
            return Self::default();
        }
        // Nearest-rank percentiles.
        let rank = |p: f64| us[((p * n as f64).ceil() as usize).clamp(1, n) - 1];
        Self {
            samples: n,
            min_us: Some(us[0]),
            median_us: Some(rank(0.5)),
            p95_us: Some(rank(0.95)),
            mean_us: Some(us.iter().sum::<f64>() / n as f64),
            max_us: Some(us[n - 1]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandlerStats {
    pub handler: String,
    #[serde(flatten)]
    pub time: Distribution,
    pub ops_per_call: OpsPerCall,
    /// Reply payload size of one call.
    pub reply_bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RttStats {
    pub kind: String,
    pub concurrent: usize,
    #[serde(flatten)]
    pub time: Distribution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThroughputStats {
    pub policy: CachingPolicy,
    pub requests: u64,
    pub elapsed_s: f64,
    pub requests_per_s: f64,
    pub exchanges: ExchangeCounts,
    pub total_exchanges: u64,
    /// Exchanges seen by the instrumented transport.
    pub wire_exchanges: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityOps {
    pub entity: String,
    pub counts: OpCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub schema: String,
    pub kind: String,
    pub seed: Option<u64>,
    pub handlers: Vec<HandlerStats>,
    pub rtt: Vec<RttStats>,
    pub rtt_overhead_ratio: Option<f64>,
    pub throughput: Vec<ThroughputStats>,
    pub crypto: Vec<EntityOps>,
}

impl BenchReport {
    fn new(kind: &str, seed: Option<u64>) -> Self {
        Self {
            schema: SCHEMA.to_owned(),
            kind: kind.to_owned(),
            seed,
            handlers: Vec::new(),
            rtt: Vec::new(),
            rtt_overhead_ratio: None,
            throughput: Vec::new(),
            crypto: Vec::new(),
        }
    }

    /// Appends the sections of `other`.
    pub fn merge(&mut self, other: BenchReport) {
        self.handlers.extend(other.handlers);
        self.rtt.extend(other.rtt);
        self.throughput.extend(other.throughput);
        self.crypto.extend(other.crypto);
        self.rtt_overhead_ratio = self.rtt_overhead_ratio.or(other.rtt_overhead_ratio);
    }

    /// Per-phase exchange counts add up to the totals everywhere.
    pub fn reconciles(&self) -> bool {
        self.throughput
            .iter()
            .all(|t| t.exchanges.total() == t.total_exchanges && t.total_exchanges == t.wire_exchanges)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_table(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_owned(), |v| format!("{v:.1}"));
        let mut out = String::new();
        if !self.handlers.is_empty() {
            let _ = writeln!(
                out,
                "{:<14} {:>8} {:>10} {:>10} {:>10}  {:>6} {:>6} {:>6} {:>6} {:>8}",
                "handler", "samples", "min_us", "median_us", "p95_us", "pk_enc", "pk_dec", "sym_en", "sym_de", "reply_B"
            );
            for h in &self.handlers {
                let _ = writeln!(
                    out,
                    "{:<14} {:>8} {:>10} {:>10} {:>10}  {:>6.2} {:>6.2} {:>6.2} {:>6.2} {:>8}",
                    h.handler,
                    h.time.samples,
                    opt(h.time.min_us),
                    opt(h.time.median_us),
                    opt(h.time.p95_us),
                    h.ops_per_call.pk_enc,
                    h.ops_per_call.pk_dec,
                    h.ops_per_call.sym_enc,
                    h.ops_per_call.sym_dec,
                    h.reply_bytes
                );
            }
        }
        if !self.rtt.is_empty() {
            let _ = writeln!(
                out,
                "{:<10} {:>10} {:>10} {:>10} {:>10} {:>10}",
                "rtt", "concurrent", "mean_us", "median_us", "p95_us", "max_us"
            );
            for r in &self.rtt {
                let _ = writeln!(
                    out,
                    "{:<10} {:>10} {:>10} {:>10} {:>10} {:>10}",
                    r.kind,
                    r.concurrent,
                    opt(r.time.mean_us),
                    opt(r.time.median_us),
                    opt(r.time.p95_us),
                    opt(r.time.max_us)
                );
            }
            if let Some(ratio) = self.rtt_overhead_ratio {
                let _ = writeln!(out, "authorized/plain RTT ratio: {ratio:.2}");
            }
        }
        if !self.throughput.is_empty() {
            let _ = writeln!(
                out,
                "{:<12} {:>9} {:>10} {:>12} {:>6} {:>6} {:>8} {:>9}",
                "policy", "requests", "elapsed_s", "requests/s", "auth", "authz", "content", "exchanges"
            );
            for t in &self.throughput {
                let _ = writeln!(
                    out,
                    "{:<12} {:>9} {:>10.3} {:>12.1} {:>6} {:>6} {:>8} {:>9}",
                    t.policy.as_str(),
                    t.requests,
                    t.elapsed_s,
                    t.requests_per_s,
                    t.exchanges.authentication,
                    t.exchanges.authorization,
                    t.exchanges.content,
                    t.total_exchanges
                );
            }
        }
        if !self.crypto.is_empty() {
            let _ = writeln!(out, "{:<40} {:>8} {:>8} {:>8} {:>8}", "entity", "pk_enc", "pk_dec", "sym_enc", "sym_dec");
            for e in &self.crypto {
                let c = e.counts;
                let _ = writeln!(
                    out,
                    "{:<40} {:>8} {:>8} {:>8} {:>8}",
                    e.entity, c.pk_enc, c.pk_dec, c.sym_enc, c.sym_dec
                );
            }
        }
        out
    }
}

fn students_item(uid: &str, i: u64) -> Name {
    Name::parse(&format!("/edu/uni-X/ics/cs/students/{uid}/item-{i}")).unwrap()
}

fn realm_crypto(realm: &super::Realm) -> Vec<EntityOps> {
    let mut out = vec![
        EntityOps { entity: "kas".into(), counts: realm.kas().crypto().counts() },
        EntityOps { entity: "tgs".into(), counts: realm.tgs().crypto().counts() },
    ];
    out.extend(realm.producers().iter().map(|p| EntityOps {
        entity: format!("producer:{}", p.namespace()),
        counts: p.crypto().counts(),
    }));
    out
}

/// `requests` sequential retrievals by one consumer under `policy`. The
/// policies are realized by zeroing ticket lifetimes, so every ticket that
/// should not be reused is expired the moment it is issued.
pub async fn bench_caching_policies(
    seed: u64,
    requests: u64,
    policy: CachingPolicy,
) -> Result<BenchReport, HarnessError> {
    let tb = Testbed::new(seed, 0);
    let tgt_lifetime = tb.config.realm.tgt_lifetime;
    let tb = match policy {
        CachingPolicy::BothCached => tb,
        CachingPolicy::TgtOnly => tb.with_lifetimes(tgt_lifetime, 0),
        CachingPolicy::None => tb.with_lifetimes(0, 0),
    };
    let (mut options, _clock) = tb.deterministic_options();
    options.record = false;
    let realm = tb.build(options)?;
    let (consumer, wire) = realm.consumer(realm.client_config("alice", tb.credentials("alice")));

    let now = realm.now();
    let started = Instant::now();
    for i in 0..requests {
        consumer.request(&students_item("alice", i), now).await?;
    }
    let elapsed = started.elapsed().as_secs_f64();
    let exchanges = consumer.exchanges();

    let mut report = BenchReport::new("caching", Some(seed));
    report.throughput.push(ThroughputStats {
        policy,
        requests,
        elapsed_s: elapsed,
        requests_per_s: if elapsed > 0.0 { requests as f64 / elapsed } else { 0.0 },
        exchanges,
        total_exchanges: exchanges.total(),
        wire_exchanges: wire.count(),
    });
    report.crypto = realm_crypto(&realm);
    Ok(report)
}

/// Runs [`bench_caching_policies`] for every policy.
pub async fn bench_caching_all(seed: u64, requests: u64) -> Result<BenchReport, HarnessError> {
    let mut report = BenchReport::new("caching", Some(seed));
    for policy in CachingPolicy::ALL {
        report.merge(bench_caching_policies(seed, requests, policy).await?);
    }
    Ok(report)
}

fn time_handler(
    label: &str,
    samples: usize,
    crypto: &crate::crypto::Crypto,
    mut call: impl FnMut() -> crate::wire::ContentObject,
) -> HandlerStats {
    let before = crypto.counts();
    let mut times = Vec::with_capacity(samples);
    let mut reply_bytes = 0;
    for _ in 0..samples {
        let t = Instant::now();
        let reply = call();
        times.push(t.elapsed());
        reply_bytes = reply.payload.len();
    }
    HandlerStats {
        handler: label.to_owned(),
        time: Distribution::from_durations(&times),
        ops_per_call: OpsPerCall::from_counts(crypto.counts() - before, samples),
        reply_bytes,
    }
}

/// Calls each service handler `samples` times with a prepared valid request
/// and times the handler alone.
pub fn bench_handler_times(seed: u64, samples: usize) -> Result<BenchReport, HarnessError> {
    let tb = Testbed::new(seed, 0);
    let config = &tb.config;
    let names: RealmNames = config.names();
    let clock = ManualClock::new(super::testbed::START);
    use super::Clock;
    let now = clock.now();
    let crypto = crate::crypto::Crypto::seeded(seed, "bench-handlers");

    let lifetimes = config.lifetimes();
    let users = Arc::new(std::sync::RwLock::new(tb.users.clone()));
    let policies = Arc::new(std::sync::RwLock::new(tb.policies.clone()));
    let registry = Arc::new(std::sync::RwLock::new(config.registry()?));
    let k_a = config.k_a()?;
    let kas = crate::services::Kas::new(
        names.tgt_name.clone(),
        k_a.clone(),
        users,
        lifetimes,
        crate::crypto::Crypto::seeded(seed, "kas"),
    );
    let tgs = crate::services::Tgs::new(
        names.cgt_name.clone(),
        k_a.clone(),
        policies,
        registry,
        lifetimes,
        crate::crypto::Crypto::seeded(seed, "tgs"),
    );
    let students = &config.producers[0];
    let k_p = students.key()?;
    let producer = crate::services::Producer::new(
        students.namespace.clone(),
        k_p.clone(),
        students.mode,
        students.source.build(),
        lifetimes.skew,
        crate::crypto::Crypto::seeded(seed, "producer"),
    );

    let tgt_request = |uid: &str| attach_payload(&names.tgt_name, uid.as_bytes().to_vec()).unwrap();
    let alice_req = tgt_request("alice");
    let dave_req = tgt_request("dave");

    let ns = Namespace::parse(STUDENTS).unwrap();
    let tgt = seal_tgt(
        &crypto,
        &k_a,
        &TgtPlain { uid: "alice".into(), t1: now + lifetimes.tgt, k_cgt: crypto.random_key() },
    );
    let cgt_req: Interest = attach_payload(
        &names.cgt_name,
        crate::services::NamespaceField::Clear(ns.clone()).encode_request(&tgt),
    )
    .unwrap();

    let cgt = seal_cgt(&crypto, &k_p, &CgtPlain { ns, k_n: crypto.random_key(), t2: now + lifetimes.cgt });
    let mut payload = vec![KIND_CGT];
    payload.extend_from_slice(&cgt);
    let content_req = attach_payload(&students_item("alice", 0), payload).unwrap();

    let mut report = BenchReport::new("handlers", Some(seed));
    report.handlers.push(time_handler("kas-pk", samples, kas.crypto(), || kas.handle(&alice_req, now)));
    report.handlers.push(time_handler("kas-password", samples, kas.crypto(), || kas.handle(&dave_req, now)));
    report.handlers.push(time_handler("tgs", samples, tgs.crypto(), || tgs.handle(&cgt_req, now)));
    report.handlers.push(time_handler("producer", samples, producer.crypto(), || {
        producer.handle(&content_req, now)
    }));
    report.crypto = vec![
        EntityOps { entity: "kas".into(), counts: kas.crypto().counts() },
        EntityOps { entity: "tgs".into(), counts: tgs.crypto().counts() },
        EntityOps { entity: format!("producer:{}", producer.namespace()), counts: producer.crypto().counts() },
    ];
    debug_assert_eq!(CONTENT_SIZE, 10_240);
    Ok(report)
}

async fn timed_all<F, Fut>(consumers: &[Arc<Consumer>], f: F) -> Result<Vec<Duration>, HarnessError>
where
    F: Fn(Arc<Consumer>, usize) -> Fut,
    Fut: std::future::Future<Output = Result<(), crate::consumer::ConsumerError>> + Send + 'static,
{
    let mut set = tokio::task::JoinSet::new();
    for (i, c) in consumers.iter().enumerate() {
        let fut = f(c.clone(), i);
        set.spawn(async move {
            let t = Instant::now();
            fut.await.map(|_| t.elapsed())
        });
    }
    let mut out = Vec::with_capacity(consumers.len());
    while let Some(r) = set.join_next().await {
        out.push(r.expect("bench task panicked")?);
    }
    Ok(out)
}

/// `concurrent` consumers each issue one request of every kind at the same
/// time: TGT, CGT, authorized content and plain content, one kind after the
/// other. Each request is a single exchange, so its RTT is the exchange RTT.
pub async fn bench_rtt(seed: u64, concurrent: usize) -> Result<BenchReport, HarnessError> {
    let tb = Testbed::new(seed, concurrent);
    let (mut options, _clock) = tb.deterministic_options();
    options.record = false;
    options.concurrent_services = true;
    options.deadline = Some(Duration::from_secs(60));
    let realm = tb.build(options)?;
    let now = realm.now();
    let ns = Namespace::parse(STUDENTS).unwrap();

    let consumers: Vec<Arc<Consumer>> = (0..concurrent)
        .map(|i| {
            let uid = bench_uid(i);
            Arc::new(realm.consumer(realm.client_config(&uid, tb.credentials(&uid))).0)
        })
        .collect();

    let tgt = timed_all(&consumers, |c, _| async move { c.authenticate(now).await.map(drop) }).await?;
    let ns2 = ns.clone();
    let cgt = timed_all(&consumers, move |c, _| {
        let ns = ns2.clone();
        async move { c.authorize(&ns, now).await.map(drop) }
    })
    .await?;
    let content = timed_all(&consumers, |c, i| async move {
        c.request(&students_item(&bench_uid(i), 0), now).await.map(drop)
    })
    .await?;
    let plain = timed_all(&consumers, |c, i| async move {
        let name = Name::parse(&format!("{PUBLIC}/item-{i}")).unwrap();
        c.request(&name, now).await.map(drop)
    })
    .await?;

    let mut report = BenchReport::new("rtt", Some(seed));
    for (kind, samples) in [("tgt", &tgt), ("cgt", &cgt), ("content", &content), ("plain", &plain)] {
        report.rtt.push(RttStats {
            kind: kind.to_owned(),
            concurrent,
            time: Distribution::from_durations(samples),
        });
    }
    let mean = |k: &str| report.rtt.iter().find(|r| r.kind == k).and_then(|r| r.time.mean_us);
    report.rtt_overhead_ratio = match (mean("content"), mean("plain")) {
        (Some(a), Some(p)) if p > 0.0 => Some(a / p),
        _ => None,
    };
    report.crypto = realm_crypto(&realm);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distribution_nearest_rank() {
        let d: Vec<_> = (1..=100).map(Duration::from_micros).collect();
        let s = Distribution::from_durations(&d);
        assert_eq!(s.samples, 100);
        assert_eq!(s.min_us, Some(1.0));
        assert_eq!(s.median_us, Some(50.0));
        assert_eq!(s.p95_us, Some(95.0));
        assert_eq!(s.max_us, Some(100.0));
        assert!((s.mean_us.unwrap() - 50.5).abs() < 1e-9);
        assert_eq!(Distribution::from_durations(&[]), Distribution::default());
    }

    #[test]
    fn expected_exchanges() {
        assert_eq!(CachingPolicy::BothCached.expected_exchanges(1000), 1002);
        assert_eq!(CachingPolicy::TgtOnly.expected_exchanges(1000), 2001);
        assert_eq!(CachingPolicy::None.expected_exchanges(1000), 3000);
        assert_eq!("tgt-only".parse::<CachingPolicy>(), Ok(CachingPolicy::TgtOnly));
    }

    #[test]
    fn zero_samples_is_empty() {
        let r = bench_handler_times(1, 0).unwrap();
        assert_eq!(r.handlers.len(), 4);
        assert!(r.handlers.iter().all(|h| h.time.samples == 0 && h.time.median_us.is_none()));
        assert!(r.to_table().contains("kas-pk"));
    }

    #[test]
    fn handler_op_counts() {
        let r = bench_handler_times(1, 5).unwrap();
        let get = |n: &str| r.handlers.iter().find(|h| h.handler == n).unwrap();
        assert_eq!(get("kas-pk").ops_per_call.pk_enc, 1.0);
        assert_eq!(get("kas-password").ops_per_call.pk_enc, 0.0);
        assert_eq!(get("tgs").ops_per_call.pk_enc, 0.0);
        assert_eq!(get("producer").ops_per_call.pk_enc, 0.0);
        assert!(get("producer").reply_bytes > CONTENT_SIZE);
        assert!(get("tgs").reply_bytes < 512);
    }

    #[tokio::test]
    async fn caching_report_reconciles() {
        let r = bench_caching_policies(3, 5, CachingPolicy::TgtOnly).await.unwrap();
        assert!(r.reconciles());
        assert_eq!(r.throughput[0].total_exchanges, 11);
        let back: BenchReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back.throughput[0].exchanges, r.throughput[0].exchanges);
        assert_eq!(back.schema, SCHEMA);
    }

    #[tokio::test]
    async fn rtt_single_request() {
        let r = bench_rtt(4, 1).await.unwrap();
        assert_eq!(r.rtt.len(), 4);
        assert!(r.rtt.iter().all(|s| s.time.samples == 1));
        assert!(r.rtt_overhead_ratio.is_some());
    }
}
