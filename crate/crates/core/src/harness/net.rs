//! Length-prefixed TCP transport: every message travels as a 4-byte
//! big-endian length followed by its TLV encoding.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::{Arc, RwLock};
use std::time::Duration;

use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::mpsc;

use crate::crypto::Crypto;
use crate::names::Name;
use crate::services::{PolicyStore, ProducerMode, Service, UserStore};
use crate::wire::{decode_with, encode, frame, PayloadDigest, MAX_FRAME_LEN};

use super::config::RealmConfig;
use super::{serve, ClientTransport, Clock, Endpoint, HarnessError, RouterNode, ServiceSet};

/// Wraps a connected stream as an endpoint. Undecodable frames close the
/// connection.
pub fn tcp_endpoint(stream: TcpStream, digest: PayloadDigest) -> Endpoint {
    let _ = stream.set_nodelay(true);
    let (mut reader, mut writer) = stream.into_split();
    let (in_tx, in_rx) = mpsc::unbounded_channel();
    let (out_tx, mut out_rx) = mpsc::unbounded_channel();
    tokio::spawn(async move {
        loop {
            let mut len = [0u8; 4];
            if reader.read_exact(&mut len).await.is_err() {
                break;
            }
            let len = u32::from_be_bytes(len) as usize;
            if len > MAX_FRAME_LEN {
                break;
            }
            let mut body = vec![0u8; len];
            if reader.read_exact(&mut body).await.is_err() {
                break;
            }
            let Ok(msg) = decode_with(&body, digest) else { break };
            if in_tx.send(msg).is_err() {
                break;
            }
        }
    });
    tokio::spawn(async move {
        while let Some(msg) = out_rx.recv().await {
            if writer.write_all(&frame(&encode(&msg))).await.is_err() {
                break;
            }
        }
    });
    Endpoint { tx: out_tx, rx: in_rx }
}

pub async fn connect(addr: &str, digest: PayloadDigest) -> std::io::Result<Endpoint> {
    Ok(tcp_endpoint(TcpStream::connect(addr).await?, digest))
}

pub async fn client_transport(addr: &str, deadline: Duration, digest: PayloadDigest) -> std::io::Result<ClientTransport> {
    Ok(ClientTransport::new(connect(addr, digest).await?, deadline))
}

/// Accepts connections forever, serving each with `service`.
pub async fn serve_tcp(listener: TcpListener, service: Arc<dyn Service>, clock: Arc<dyn Clock>, digest: PayloadDigest) {
    while let Ok((stream, _)) = listener.accept().await {
        serve(tcp_endpoint(stream, digest), service.clone(), clock.clone(), true);
    }
}

/// Starts a router on `listener` that dials each distinct upstream address
/// once and routes the given prefixes to it. Every accepted connection
/// becomes a face.
pub async fn run_router(
    listener: TcpListener,
    cs_capacity: usize,
    clock: Arc<dyn Clock>,
    routes: &[(Name, String)],
    digest: PayloadDigest,
) -> std::io::Result<RouterNode> {
    let node = RouterNode::spawn(cs_capacity, clock, None, None);
    let mut upstream = BTreeMap::new();
    for (prefix, addr) in routes {
        let face = match upstream.get(addr) {
            Some(f) => *f,
            None => {
                let f = node.attach(format!("upstream:{addr}"), connect(addr, digest).await?);
                upstream.insert(addr.clone(), f);
                f
            }
        };
        node.route(prefix.clone(), face);
    }
    let acceptor = node.clone();
    tokio::spawn(async move {
        while let Ok((stream, peer)) = listener.accept().await {
            acceptor.attach(format!("peer:{peer}"), tcp_endpoint(stream, digest));
        }
    });
    Ok(node)
}

/// One process-level role of a socket deployment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Role {
    Router,
    Kas,
    Tgs,
    /// Index into `[[producer]]`; `mutual` forces challenge-response mode.
    Producer { index: usize, mutual: bool },
    Plain(usize),
}

fn listen_addr(addr: &Option<String>, what: &str) -> Result<String, HarnessError> {
    addr.clone()
        .ok_or_else(|| HarnessError::config(format!("{what} has no listen address")))
}

/// Every prefix the router must reach and the address serving it.
pub fn routes(config: &RealmConfig) -> Result<Vec<(Name, String)>, HarnessError> {
    let mut out = vec![
        (config.realm.tgt_name.clone(), listen_addr(&config.kas.listen, "kas")?),
        (config.realm.cgt_name.clone(), listen_addr(&config.tgs.listen, "tgs")?),
    ];
    for p in &config.producers {
        out.push((p.routable_prefix(), listen_addr(&p.listen, &format!("producer {}", p.namespace))?));
    }
    for p in &config.plain {
        out.push((p.prefix.clone(), listen_addr(&p.listen, &format!("plain producer {}", p.prefix))?));
    }
    Ok(out)
}

/// Binds and starts `role`; returns the bound address. Services keep
/// running on background tasks.
pub async fn start_role(
    config: &RealmConfig,
    users: UserStore,
    policies: PolicyStore,
    role: &Role,
    clock: Arc<dyn Clock>,
    seed: Option<u64>,
) -> Result<SocketAddr, HarnessError> {
    let digest = config.realm.digest;
    let bind = |addr: String| async move {
        TcpListener::bind(&addr)
            .await
            .map_err(|e| HarnessError::config(format!("cannot listen on {addr}: {e}")))
    };
    if *role == Role::Router {
        let listener = bind(listen_addr(&config.router.listen, "router")?).await?;
        let addr = listener.local_addr()?;
        run_router(listener, config.router.cs_capacity, clock, &routes(config)?, digest).await?;
        return Ok(addr);
    }

    let mut config = config.clone();
    if let Role::Producer { index, mutual: true } = role {
        if let Some(p) = config.producers.get_mut(*index) {
            p.mode = ProducerMode::Mutual;
        }
    }
    let crypto = |label: &str| seed.map(|s| Crypto::seeded(s, label)).unwrap_or_default();
    let set = ServiceSet::build(&config, Arc::new(RwLock::new(users)), Arc::new(RwLock::new(policies)), &crypto)?;
    let (service, addr): (Arc<dyn Service>, _) = match role {
        Role::Router => unreachable!(),
        Role::Kas => (set.kas, listen_addr(&config.kas.listen, "kas")?),
        Role::Tgs => (set.tgs, listen_addr(&config.tgs.listen, "tgs")?),
        Role::Producer { index, .. } => {
            let p = config
                .producers
                .get(*index)
                .ok_or_else(|| HarnessError::config(format!("no producer #{index}")))?;
            (set.producers[*index].clone(), listen_addr(&p.listen, "producer")?)
        }
        Role::Plain(index) => {
            let p = config
                .plain
                .get(*index)
                .ok_or_else(|| HarnessError::config(format!("no plain producer #{index}")))?;
            (set.plain[*index].clone(), listen_addr(&p.listen, "plain producer")?)
        }
    };
    let listener = bind(addr).await?;
    let local = listener.local_addr()?;
    tokio::spawn(serve_tcp(listener, service, clock, digest));
    Ok(local)
}

/// Starts every service, then the router. Listen addresses with port 0 are
/// replaced by the bound ones before the router dials them; the returned
/// config carries the final addresses.
pub async fn start_all(
    config: &RealmConfig,
    users: UserStore,
    policies: PolicyStore,
    clock: Arc<dyn Clock>,
    seed: Option<u64>,
) -> Result<(SocketAddr, RealmConfig), HarnessError> {
    let mut config = config.clone();
    let addr = start_role(&config, users.clone(), policies.clone(), &Role::Kas, clock.clone(), seed).await?;
    config.kas.listen = Some(addr.to_string());
    let addr = start_role(&config, users.clone(), policies.clone(), &Role::Tgs, clock.clone(), seed).await?;
    config.tgs.listen = Some(addr.to_string());
    for index in 0..config.producers.len() {
        let role = Role::Producer { index, mutual: false };
        let addr = start_role(&config, users.clone(), policies.clone(), &role, clock.clone(), seed).await?;
        config.producers[index].listen = Some(addr.to_string());
    }
    for index in 0..config.plain.len() {
        let addr = start_role(&config, users.clone(), policies.clone(), &Role::Plain(index), clock.clone(), seed).await?;
        config.plain[index].listen = Some(addr.to_string());
    }
    let addr = start_role(&config, users, policies, &Role::Router, clock, seed).await?;
    config.router.listen = Some(addr.to_string());
    Ok((addr, config))
}
