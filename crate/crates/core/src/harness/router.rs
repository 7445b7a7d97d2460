use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::Serialize;
use tokio::sync::{mpsc, oneshot};

use crate::forwarder::{Effect, FaceId, Fib, Router, RouterCounters};
use crate::names::Name;
use crate::wire::{encode, Message};

use super::{Clock, Endpoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Received by the router on `face`.
    In,
    /// Sent by the router on `face`.
    Out,
}

/// One message as seen at the router. `bytes` is the wire encoding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TranscriptEntry {
    pub seq: u64,
    pub face: FaceId,
    pub label: String,
    pub direction: Direction,
    pub name: String,
    pub interest: bool,
    pub bytes: Vec<u8>,
}

impl TranscriptEntry {
    pub fn contains(&self, needle: &[u8]) -> bool {
        !needle.is_empty() && self.bytes.windows(needle.len()).any(|w| w == needle)
    }
}

/// Shared, append-only message log.
#[derive(Debug, Clone, Default)]
pub struct Transcript(Arc<Mutex<Vec<TranscriptEntry>>>);

impl Transcript {
    pub fn entries(&self) -> Vec<TranscriptEntry> {
        self.0.lock().unwrap().clone()
    }

    pub fn len(&self) -> usize {
        self.0.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn clear(&self) {
        self.0.lock().unwrap().clear();
    }

    fn record(&self, face: FaceId, label: &str, direction: Direction, msg: &Message) {
        let mut log = self.0.lock().unwrap();
        let seq = log.len() as u64;
        let (name, interest) = match msg {
            Message::Interest(i) => (i.name().to_string(), true),
            Message::Content(c) => (c.name.to_string(), false),
        };
        log.push(TranscriptEntry {
            seq,
            face,
            label: label.to_owned(),
            direction,
            name,
            interest,
            bytes: encode(msg),
        });
    }
}

/// Hook on every message entering the router. Returns the messages to
/// process instead, each with the face it should count as arriving on.
pub trait Tap: Send {
    fn ingress(&mut self, face: FaceId, msg: Message) -> Vec<(FaceId, Message)>;
}

enum Cmd {
    Attach(FaceId, String, mpsc::UnboundedSender<Message>),
    Route(Name, FaceId),
    Ingress(FaceId, Message),
    Counters(oneshot::Sender<RouterCounters>),
}

/// A forwarder running as a task. All faces and routes are added through
/// the handle; the task stops when every handle and face is gone.
#[derive(Clone)]
pub struct RouterNode {
    cmd: mpsc::UnboundedSender<Cmd>,
    next_face: Arc<Mutex<FaceId>>,
}

impl RouterNode {
    /// Must be called inside a tokio runtime.
    pub fn spawn(
        cs_capacity: usize,
        clock: Arc<dyn Clock>,
        transcript: Option<Transcript>,
        mut tap: Option<Box<dyn Tap>>,
    ) -> Self {
        let (cmd, mut rx) = mpsc::unbounded_channel::<Cmd>();
        tokio::spawn(async move {
            let mut router = Router::new(Fib::new(), cs_capacity);
            let mut faces: HashMap<FaceId, (String, mpsc::UnboundedSender<Message>)> = HashMap::new();
            while let Some(c) = rx.recv().await {
                match c {
                    Cmd::Attach(face, label, tx) => {
                        faces.insert(face, (label, tx));
                    }
                    Cmd::Route(prefix, face) => {
                        router.fib.insert(&prefix, face);
                    }
                    Cmd::Counters(reply) => {
                        let _ = reply.send(router.counters());
                    }
                    Cmd::Ingress(face, msg) => {
                        let batch = match tap.as_mut() {
                            Some(t) => t.ingress(face, msg),
                            None => vec![(face, msg)],
                        };
                        for (face, msg) in batch {
                            if let (Some(t), Some((label, _))) = (&transcript, faces.get(&face)) {
                                t.record(face, label, Direction::In, &msg);
                            }
                            for Effect::Send { face: out, message } in router.on_message(face, msg, clock.now()) {
                                if let Some((label, tx)) = faces.get(&out) {
                                    if let Some(t) = &transcript {
                                        t.record(out, label, Direction::Out, &message);
                                    }
                                    let _ = tx.send(message);
                                }
                            }
                        }
                    }
                }
            }
        });
        Self {
            cmd,
            next_face: Arc::new(Mutex::new(1)),
        }
    }

    /// Adds a face whose far side is `endpoint`.
    pub fn attach(&self, label: impl Into<String>, endpoint: Endpoint) -> FaceId {
        let face = {
            let mut next = self.next_face.lock().unwrap();
            let f = *next;
            *next += 1;
            f
        };
        let Endpoint { tx, mut rx } = endpoint;
        let _ = self.cmd.send(Cmd::Attach(face, label.into(), tx));
        let cmd = self.cmd.clone();
        tokio::spawn(async move {
            while let Some(msg) = rx.recv().await {
                if cmd.send(Cmd::Ingress(face, msg)).is_err() {
                    break;
                }
            }
        });
        face
    }

    /// Creates a face and returns the far endpoint.
    pub fn connect(&self, label: impl Into<String>) -> (FaceId, Endpoint) {
        let (near, far) = Endpoint::pair();
        (self.attach(label, far), near)
    }

    pub fn route(&self, prefix: Name, face: FaceId) {
        let _ = self.cmd.send(Cmd::Route(prefix, face));
    }

    pub async fn counters(&self) -> RouterCounters {
        let (tx, rx) = oneshot::channel();
        let _ = self.cmd.send(Cmd::Counters(tx));
        rx.await.unwrap_or_default()
    }
}
