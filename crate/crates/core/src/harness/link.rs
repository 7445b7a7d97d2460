use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use async_trait::async_trait;
use tokio::sync::{mpsc, oneshot};

use crate::consumer::{Transport, TransportError};
use crate::names::Name;
use crate::services::Service;
use crate::wire::{ContentObject, Interest, Message};

use super::Clock;

/// One side of a bidirectional message link. Faces of a router, services
/// and clients all talk through endpoints, whatever carries the bytes.
#[derive(Debug)]
pub struct Endpoint {
    pub tx: mpsc::UnboundedSender<Message>,
    pub rx: mpsc::UnboundedReceiver<Message>,
}

impl Endpoint {
    /// Two endpoints wired back to back.
    pub fn pair() -> (Endpoint, Endpoint) {
        let (a_tx, b_rx) = mpsc::unbounded_channel();
        let (b_tx, a_rx) = mpsc::unbounded_channel();
        (Endpoint { tx: a_tx, rx: a_rx }, Endpoint { tx: b_tx, rx: b_rx })
    }
}

type Waiters = Arc<Mutex<HashMap<Name, Vec<oneshot::Sender<ContentObject>>>>>;

/// Interest/content exchanges over an endpoint. Replies are matched to
/// waiters by name; unsolicited content is dropped.
pub struct ClientTransport {
    tx: mpsc::UnboundedSender<Message>,
    waiters: Waiters,
    deadline: Duration,
}

impl ClientTransport {
    /// Must be called inside a tokio runtime.
    pub fn new(endpoint: Endpoint, deadline: Duration) -> Self {
        let Endpoint { tx, mut rx } = endpoint;
        let waiters: Waiters = Arc::default();
        let table = waiters.clone();
        tokio::spawn(async move {
            while let Some(msg) = rx.recv().await {
                if let Message::Content(c) = msg {
                    let ready = table.lock().unwrap().remove(&c.name);
                    for w in ready.into_iter().flatten() {
                        let _ = w.send(c.clone());
                    }
                }
            }
            table.lock().unwrap().clear();
        });
        Self { tx, waiters, deadline }
    }
}

#[async_trait]
impl Transport for ClientTransport {
    async fn exchange(&self, interest: Interest) -> Result<ContentObject, TransportError> {
        let name = interest.name().clone();
        let (done, wait) = oneshot::channel();
        self.waiters.lock().unwrap().entry(name.clone()).or_default().push(done);
        if self.tx.send(Message::Interest(interest)).is_err() {
            return Err(TransportError::Closed);
        }
        match tokio::time::timeout(self.deadline, wait).await {
            Ok(Ok(c)) => Ok(c),
            Ok(Err(_)) => Err(TransportError::Closed),
            Err(_) => {
                let mut table = self.waiters.lock().unwrap();
                if let Some(ws) = table.get_mut(&name) {
                    ws.retain(|w| !w.is_closed());
                    if ws.is_empty() {
                        table.remove(&name);
                    }
                }
                Err(TransportError::Timeout)
            }
        }
    }
}

/// Counts exchanges passing through the wrapped transport.
pub struct CountingTransport<T> {
    inner: T,
    count: AtomicU64,
}

impl<T> CountingTransport<T> {
    pub fn new(inner: T) -> Self {
        Self {
            inner,
            count: AtomicU64::new(0),
        }
    }

    pub fn count(&self) -> u64 {
        self.count.load(Ordering::Relaxed)
    }
}

#[async_trait]
impl<T: Transport> Transport for CountingTransport<T> {
    async fn exchange(&self, interest: Interest) -> Result<ContentObject, TransportError> {
        self.count.fetch_add(1, Ordering::Relaxed);
        self.inner.exchange(interest).await
    }
}

/// Answers every interest arriving on `endpoint` with `service`. With
/// `concurrent`, each interest is handled on its own task; otherwise in
/// arrival order.
pub fn serve(endpoint: Endpoint, service: Arc<dyn Service>, clock: Arc<dyn Clock>, concurrent: bool) {
    let Endpoint { tx, mut rx } = endpoint;
    tokio::spawn(async move {
        while let Some(msg) = rx.recv().await {
            let Message::Interest(interest) = msg else { continue };
            if concurrent {
                let (service, clock, tx) = (service.clone(), clock.clone(), tx.clone());
                tokio::spawn(async move {
                    let reply = service.handle(&interest, clock.now());
                    let _ = tx.send(Message::Content(reply));
                });
            } else {
                let reply = service.handle(&interest, clock.now());
                if tx.send(Message::Content(reply)).is_err() {
                    break;
                }
            }
        }
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::ManualClock;

    struct Echo;

    impl Service for Echo {
        fn handle(&self, interest: &Interest, _now: u64) -> ContentObject {
            ContentObject::new(interest.name().clone(), b"echo".to_vec(), 0)
        }

        fn label(&self) -> &str {
            "echo"
        }
    }

    #[tokio::test]
    async fn exchange_through_a_served_pair() {
        let (client, server) = Endpoint::pair();
        serve(server, Arc::new(Echo), Arc::new(ManualClock::new(0)), false);
        let t = CountingTransport::new(ClientTransport::new(client, Duration::from_secs(1)));
        let reply = t.exchange(Interest::new(Name::parse("/x").unwrap())).await.unwrap();
        assert_eq!(reply.payload, b"echo");
        assert_eq!(t.count(), 1);
    }

    #[tokio::test]
    async fn silent_peer_times_out() {
        let (client, _server) = Endpoint::pair();
        let t = ClientTransport::new(client, Duration::from_millis(20));
        let err = t.exchange(Interest::new(Name::parse("/x").unwrap())).await.unwrap_err();
        assert_eq!(err, TransportError::Timeout);
        assert!(t.waiters.lock().unwrap().is_empty());
    }
}
