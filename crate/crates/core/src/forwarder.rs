//! CCN forwarding engine.
//!
//! [`Router`] is a pure state machine: feed it interests and content objects
//! tagged with the face they arrived on, and it returns the [`Effect`]s to
//! apply. Running it on a task or thread is the caller's business.

use std::collections::{BTreeSet, HashMap};
use std::num::NonZeroUsize;

use lru::LruCache;
use serde::Serialize;

use crate::names::Name;
use crate::wire::{ContentObject, Interest, Message};

pub type FaceId = u32;

#[derive(Debug, Default, Clone)]
struct FibNode {
    face: Option<FaceId>,
    children: HashMap<String, FibNode>,
}

/// Prefix → face table with longest-prefix-match lookup over a segment trie.
#[derive(Debug, Default, Clone)]
pub struct Fib {
    root: FibNode,
    len: usize,
}

impl Fib {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or replaces the entry for `prefix`, returning the old face.
    pub fn insert(&mut self, prefix: &Name, face: FaceId) -> Option<FaceId> {
        let mut node = &mut self.root;
        for seg in prefix.segments() {
            node = node.children.entry(seg.clone()).or_default();
        }
        let old = node.face.replace(face);
        if old.is_none() {
            self.len += 1;
        }
        old
    }

    pub fn remove(&mut self, prefix: &Name) -> Option<FaceId> {
        let mut node = &mut self.root;
        for seg in prefix.segments() {
            node = node.children.get_mut(seg)?;
        }
        let old = node.face.take();
        if old.is_some() {
            self.len -= 1;
        }
        old
    }

    pub fn get(&self, prefix: &Name) -> Option<FaceId> {
        let mut node = &self.root;
        for seg in prefix.segments() {
            node = node.children.get(seg)?;
        }
        node.face
    }

    pub fn lookup(&self, name: &Name) -> Option<FaceId> {
        fib_lookup(self, name)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn entries(&self) -> Vec<(Name, FaceId)> {
        fn walk(node: &FibNode, path: &mut Vec<String>, out: &mut Vec<(Name, FaceId)>) {
            if let Some(face) = node.face {
                out.push((Name::from_segments(path.clone()).expect("valid prefix"), face));
            }
            for (seg, child) in &node.children {
                path.push(seg.clone());
                walk(child, path, out);
                path.pop();
            }
        }
        let mut out = Vec::with_capacity(self.len);
        walk(&self.root, &mut Vec::new(), &mut out);
        out.sort();
        out
    }
}

pub fn fib_lookup(fib: &Fib, name: &Name) -> Option<FaceId> {
    let mut node = &fib.root;
    let mut best = None;
    for seg in name.segments() {
        match node.children.get(seg) {
            Some(child) => {
                node = child;
                best = node.face.or(best);
            }
            None => break,
        }
    }
    best
}

/// Pending interests: full interest name → faces waiting for it.
#[derive(Debug, Default, Clone)]
pub struct Pit {
    entries: HashMap<Name, BTreeSet<FaceId>>,
}

impl Pit {
    pub fn get(&self, name: &Name) -> Option<&BTreeSet<FaceId>> {
        self.entries.get(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Returns true if a new entry was created.
    fn record(&mut self, name: &Name, face: FaceId) -> bool {
        match self.entries.get_mut(name) {
            Some(faces) => {
                faces.insert(face);
                false
            }
            None => {
                self.entries.insert(name.clone(), BTreeSet::from([face]));
                true
            }
        }
    }

    fn take(&mut self, name: &Name) -> Option<BTreeSet<FaceId>> {
        self.entries.remove(name)
    }
}

/// Bounded LRU cache keyed by exact name. Entries carry an absolute expiry
/// instant in seconds.
#[derive(Debug)]
pub struct ContentStore {
    cache: Option<LruCache<Name, (ContentObject, u64)>>,
}

impl ContentStore {
    /// `capacity == 0` disables caching.
    pub fn new(capacity: usize) -> Self {
        Self {
            cache: NonZeroUsize::new(capacity).map(LruCache::new),
        }
    }

    pub fn capacity(&self) -> usize {
        self.cache.as_ref().map_or(0, |c| c.cap().get())
    }

    pub fn len(&self) -> usize {
        self.cache.as_ref().map_or(0, LruCache::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, name: &Name) -> bool {
        self.cache.as_ref().is_some_and(|c| c.contains(name))
    }

    /// Stores `content` unless it forbids caching. Returns whether it was stored.
    pub fn insert(&mut self, content: ContentObject, now: u64) -> bool {
        let Some(cache) = self.cache.as_mut() else {
            return false;
        };
        if content.expiry_time == 0 {
            return false;
        }
        let expires = now.saturating_add(content.expiry_time);
        cache.put(content.name.clone(), (content, expires));
        true
    }

    /// Fresh entry for `name`; expired entries are dropped on sight.
    pub fn get(&mut self, name: &Name, now: u64) -> Option<ContentObject> {
        let cache = self.cache.as_mut()?;
        match cache.get(name) {
            Some((c, expires)) if *expires > now => Some(c.clone()),
            Some(_) => {
                cache.pop(name);
                None
            }
            None => None,
        }
    }

    pub fn evict_expired(&mut self, now: u64) -> usize {
        let Some(cache) = self.cache.as_mut() else {
            return 0;
        };
        let stale: Vec<Name> = cache
            .iter()
            .filter(|(_, (_, expires))| *expires <= now)
            .map(|(n, _)| n.clone())
            .collect();
        for n in &stale {
            cache.pop(n);
        }
        stale.len()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct RouterCounters {
    pub interests: u64,
    pub forwards: u64,
    pub drops: u64,
    pub cs_hits: u64,
    pub pit_aggregations: u64,
    pub contents: u64,
    pub deliveries: u64,
    pub unsolicited: u64,
    pub cached: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Effect {
    Send { face: FaceId, message: Message },
}

#[derive(Debug)]
pub struct Router {
    pub fib: Fib,
    pit: Pit,
    cs: ContentStore,
    counters: RouterCounters,
}

impl Router {
    pub fn new(fib: Fib, cs_capacity: usize) -> Self {
        Self {
            fib,
            pit: Pit::default(),
            cs: ContentStore::new(cs_capacity),
            counters: RouterCounters::default(),
        }
    }

    pub fn pit(&self) -> &Pit {
        &self.pit
    }

    pub fn content_store(&self) -> &ContentStore {
        &self.cs
    }

    pub fn counters(&self) -> RouterCounters {
        self.counters
    }

    pub fn on_message(&mut self, face: FaceId, message: Message, now: u64) -> Vec<Effect> {
        match message {
            Message::Interest(i) => self.on_interest(face, i, now),
            Message::Content(c) => self.on_content(face, c, now),
        }
    }

    pub fn on_interest(&mut self, face: FaceId, interest: Interest, now: u64) -> Vec<Effect> {
        self.counters.interests += 1;
        if let Some(hit) = self.cs.get(interest.name(), now) {
            self.counters.cs_hits += 1;
            return vec![Effect::Send {
                face,
                message: hit.into(),
            }];
        }
        if self.pit.get(interest.name()).is_some() {
            self.pit.record(interest.name(), face);
            self.counters.pit_aggregations += 1;
            return Vec::new();
        }
        let Some(upstream) = self.fib.lookup(interest.name()) else {
            self.counters.drops += 1;
            return Vec::new();
        };
        self.pit.record(interest.name(), face);
        self.counters.forwards += 1;
        vec![Effect::Send {
            face: upstream,
            message: interest.into(),
        }]
    }

    pub fn on_content(&mut self, _face: FaceId, content: ContentObject, now: u64) -> Vec<Effect> {
        self.counters.contents += 1;
        let Some(faces) = self.pit.take(&content.name) else {
            self.counters.unsolicited += 1;
            return Vec::new();
        };
        let effects: Vec<Effect> = faces
            .into_iter()
            .map(|face| Effect::Send {
                face,
                message: content.clone().into(),
            })
            .collect();
        self.counters.deliveries += effects.len() as u64;
        if self.cs.insert(content, now) {
            self.counters.cached += 1;
        }
        effects
    }

    pub fn cs_evict(&mut self, now: u64) -> usize {
        self.cs.evict_expired(now)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wire::attach_payload;

    fn n(s: &str) -> Name {
        Name::parse(s).unwrap()
    }

    fn sends(effects: &[Effect]) -> Vec<(FaceId, &Name)> {
        effects
            .iter()
            .map(|Effect::Send { face, message }| (*face, message.name()))
            .collect()
    }

    #[test]
    fn lookup_examples() {
        let mut fib = Fib::new();
        fib.insert(&n("/edu"), 1);
        fib.insert(&n("/edu/uni-X"), 2);
        assert_eq!(fib_lookup(&fib, &n("/edu/uni-X/ics")), Some(2));
        assert_eq!(fib_lookup(&fib, &n("/edu/other")), Some(1));
        assert_eq!(fib_lookup(&fib, &n("/com/x")), None);

        let mut fib = Fib::new();
        fib.insert(&n("/edu/uni-X/ics"), 3);
        assert_eq!(fib_lookup(&fib, &n("/edu/uni-X")), None);
    }

    #[test]
    fn fib_insert_replace_remove() {
        let mut fib = Fib::new();
        assert_eq!(fib.insert(&n("/a/b"), 1), None);
        assert_eq!(fib.insert(&n("/a/b"), 2), Some(1));
        assert_eq!(fib.len(), 1);
        assert_eq!(fib.get(&n("/a/b")), Some(2));
        assert_eq!(fib.get(&n("/a")), None);
        assert_eq!(fib.entries(), vec![(n("/a/b"), 2)]);
        assert_eq!(fib.remove(&n("/a/b")), Some(2));
        assert!(fib.is_empty());
        assert_eq!(fib.lookup(&n("/a/b/c")), None);
    }

    fn router() -> Router {
        let mut fib = Fib::new();
        fib.insert(&n("/p"), 9);
        Router::new(fib, 8)
    }

    #[test]
    fn same_name_interests_aggregate() {
        let mut r = router();
        let i = Interest::new(n("/p/x"));
        let e1 = r.on_interest(1, i.clone(), 0);
        let e2 = r.on_interest(2, i, 0);
        assert_eq!(sends(&e1), vec![(9, &n("/p/x"))]);
        assert!(e2.is_empty());
        assert_eq!(r.pit().get(&n("/p/x")).unwrap(), &BTreeSet::from([1, 2]));
        assert_eq!(r.counters().forwards, 1);
        assert_eq!(r.counters().pit_aggregations, 1);

        let c = ContentObject::new(n("/p/x"), b"d".to_vec(), 0);
        let out = r.on_content(9, c, 0);
        assert_eq!(sends(&out), vec![(1, &n("/p/x")), (2, &n("/p/x"))]);
        assert!(r.pit().is_empty());
    }

    #[test]
    fn unmatched_interest_is_dropped() {
        let mut r = router();
        assert!(r.on_interest(1, Interest::new(n("/q/x")), 0).is_empty());
        assert_eq!(r.counters().drops, 1);
        assert!(r.pit().is_empty());
    }

    #[test]
    fn unsolicited_content_is_discarded() {
        let mut r = router();
        let out = r.on_content(9, ContentObject::new(n("/p/x"), b"d".to_vec(), 100), 0);
        assert!(out.is_empty());
        assert_eq!(r.counters().unsolicited, 1);
        assert!(r.content_store().is_empty());
    }

    #[test]
    fn cached_content_served_until_expiry() {
        let mut r = router();
        r.on_interest(1, Interest::new(n("/p/x")), 0);
        r.on_content(9, ContentObject::new(n("/p/x"), b"d".to_vec(), 10), 100);
        assert!(r.content_store().contains(&n("/p/x")));

        let hit = r.on_interest(2, Interest::new(n("/p/x")), 105);
        assert_eq!(sends(&hit), vec![(2, &n("/p/x"))]);
        assert!(r.pit().is_empty());
        assert_eq!(r.counters().forwards, 1);

        // expired at 110: forwarded upstream again
        let miss = r.on_interest(3, Interest::new(n("/p/x")), 110);
        assert_eq!(sends(&miss), vec![(9, &n("/p/x"))]);
    }

    #[test]
    fn zero_expiry_is_never_cached() {
        let mut r = router();
        r.on_interest(1, Interest::new(n("/p/x")), 0);
        let out = r.on_content(9, ContentObject::new(n("/p/x"), b"d".to_vec(), 0), 0);
        assert_eq!(out.len(), 1);
        assert!(r.content_store().is_empty());
    }

    #[test]
    fn eviction() {
        let mut cs = ContentStore::new(4);
        assert_eq!(cs.evict_expired(0), 0);
        cs.insert(ContentObject::new(n("/a"), vec![1], 1), 99); // expires 100
        cs.insert(ContentObject::new(n("/b"), vec![1], 2), 99); // expires 101
        assert_eq!(cs.evict_expired(100), 1);
        assert!(!cs.contains(&n("/a")));
        assert!(cs.contains(&n("/b")));
    }

    #[test]
    fn lru_capacity_bound() {
        let mut cs = ContentStore::new(2);
        for (i, name) in ["/a", "/b", "/c"].iter().enumerate() {
            cs.insert(ContentObject::new(n(name), vec![i as u8], 60), 0);
            if i == 1 {
                // touch /a so /b becomes least recently used
                assert!(cs.get(&n("/a"), 0).is_some());
            }
        }
        assert_eq!(cs.len(), 2);
        assert!(cs.contains(&n("/a")));
        assert!(!cs.contains(&n("/b")));
        assert!(cs.contains(&n("/c")));
        assert!(!ContentStore::new(0).insert(ContentObject::new(n("/a"), vec![1], 5), 0));
    }

    #[test]
    fn distinct_payload_interests_do_not_aggregate() {
        let mut r = router();
        let a = attach_payload(&n("/p/TGT"), b"alice".to_vec()).unwrap();
        let b = attach_payload(&n("/p/TGT"), b"bob".to_vec()).unwrap();
        assert_eq!(r.on_interest(1, a, 0).len(), 1);
        assert_eq!(r.on_interest(2, b, 0).len(), 1);
        assert_eq!(r.counters().pit_aggregations, 0);
        assert_eq!(r.pit().len(), 2);
    }
}
