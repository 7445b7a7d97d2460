//! Network adversaries: replaying recorded interests, tampering with bytes
//! in flight, forging content, and a compromised router that reorders and
//! duplicates traffic. Each is a [`Tap`] or works from an attacker face.

use std::time::Duration;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::consumer::Transport;
use crate::forwarder::FaceId;
use crate::wire::{decode_with, encode, ContentObject, Interest, Message, PayloadDigest};

use super::{ClientTransport, Direction, Endpoint, Tap, TranscriptEntry};

/// Interests the router received on faces whose label starts with `prefix`.
pub fn recorded_interests(entries: &[TranscriptEntry], prefix: &str, digest: PayloadDigest) -> Vec<Interest> {
    entries
        .iter()
        .filter(|e| e.interest && e.direction == Direction::In && e.label.starts_with(prefix))
        .filter_map(|e| match decode_with(&e.bytes, digest) {
            Ok(Message::Interest(i)) => Some(i),
            _ => None,
        })
        .collect()
}

/// Sends each interest from an attacker face and returns whatever came back.
pub async fn replay(endpoint: Endpoint, interests: Vec<Interest>, deadline: Duration) -> Vec<ContentObject> {
    let t = ClientTransport::new(endpoint, deadline);
    let mut out = Vec::new();
    for i in interests {
        if let Ok(c) = t.exchange(i).await {
            out.push(c);
        }
    }
    out
}

/// `(entry seq, secret index)` for every transcript entry containing a secret.
pub fn leaks(entries: &[TranscriptEntry], secrets: &[Vec<u8>]) -> Vec<(u64, usize)> {
    let mut out = Vec::new();
    for e in entries {
        for (i, s) in secrets.iter().enumerate() {
            if e.contains(s) {
                out.push((e.seq, i));
            }
        }
    }
    out
}

/// Flips one random byte of a message with probability `rate`. Messages
/// that no longer decode are dropped, as a receiver would.
pub struct TamperTap {
    rng: ChaCha20Rng,
    rate: f64,
    digest: PayloadDigest,
    pub tampered: u64,
}

impl TamperTap {
    pub fn new(seed: u64, rate: f64, digest: PayloadDigest) -> Self {
        Self {
            rng: ChaCha20Rng::seed_from_u64(seed),
            rate,
            digest,
            tampered: 0,
        }
    }
}

impl Tap for TamperTap {
    fn ingress(&mut self, face: FaceId, msg: Message) -> Vec<(FaceId, Message)> {
        if !self.rng.gen_bool(self.rate) {
            return vec![(face, msg)];
        }
        self.tampered += 1;
        let mut bytes = encode(&msg);
        let at = self.rng.gen_range(0..bytes.len());
        bytes[at] ^= self.rng.gen_range(1..=255u8);
        match decode_with(&bytes, self.digest) {
            Ok(m) => vec![(face, m)],
            Err(_) => Vec::new(),
        }
    }
}

/// Answers every interest it sees with forged content, injected ahead of
/// the genuine reply as if from `attacker`.
pub struct ForgeTap {
    rng: ChaCha20Rng,
    attacker: FaceId,
    pub forged: u64,
}

impl ForgeTap {
    pub fn new(seed: u64, attacker: FaceId) -> Self {
        Self {
            rng: ChaCha20Rng::seed_from_u64(seed),
            attacker,
            forged: 0,
        }
    }
}

impl Tap for ForgeTap {
    fn ingress(&mut self, face: FaceId, msg: Message) -> Vec<(FaceId, Message)> {
        let Message::Interest(i) = &msg else {
            return vec![(face, msg)];
        };
        if face == self.attacker {
            return vec![(face, msg)];
        }
        self.forged += 1;
        let len = self.rng.gen_range(1..512);
        let mut payload = vec![0u8; len];
        self.rng.fill(&mut payload[..]);
        // Half the forgeries claim success so they reach the decryption path.
        if self.rng.gen_bool(0.5) {
            payload[0] = 0;
        }
        let forged = ContentObject::new(i.name().clone(), payload, 0);
        vec![(face, msg), (self.attacker, Message::Content(forged))]
    }
}

/// A compromised router: holds back messages and releases them out of
/// order, and duplicates some.
pub struct ReorderTap {
    rng: ChaCha20Rng,
    hold: f64,
    duplicate: f64,
    window: usize,
    held: Vec<(FaceId, Message)>,
}

impl ReorderTap {
    pub fn new(seed: u64, hold: f64, duplicate: f64, window: usize) -> Self {
        Self {
            rng: ChaCha20Rng::seed_from_u64(seed),
            hold,
            duplicate,
            window: window.max(1),
            held: Vec::new(),
        }
    }
}

impl Tap for ReorderTap {
    fn ingress(&mut self, face: FaceId, msg: Message) -> Vec<(FaceId, Message)> {
        if self.rng.gen_bool(self.duplicate) {
            self.held.push((face, msg.clone()));
        }
        self.held.push((face, msg));
        if self.held.len() < self.window && self.rng.gen_bool(self.hold) {
            return Vec::new();
        }
        let mut out = std::mem::take(&mut self.held);
        out.shuffle(&mut self.rng);
        out
    }
}
