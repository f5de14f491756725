//! Minimal MQTT 3.1.1 broker that enforces a P1451.1.6 security level.
//!
//! The level decides three things, straight from its policy set:
//! encryption means the listener speaks TLS only, authentication means
//! CONNECT must carry valid credentials, and authorization means every
//! PUBLISH and SUBSCRIBE is checked against the ACL snapshot.
//!
//! The ACL snapshot is replaced wholesale on reload. A reload also
//! re-checks every live subscription and drops the ones the new policy no
//! longer allows.

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, SystemTime};

use p1451_core::acl::{self, AclDocument, AclParseError, Decision};
use p1451_core::mqtt::{
    connack, filter_matches, Connect, Packet, Publish, QoS, TopicFilter, TopicName, SUBACK_FAILURE,
};
use p1451_core::teds::{Policy, SecurityLevel};
use thiserror::Error;
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{mpsc, watch, Notify};
use tokio::task::JoinHandle;
use tokio_rustls::TlsAcceptor;
use tracing::{debug, info, warn};

use crate::auth::{CredentialStore, PasswordFileError};
use crate::transport::{server_config, write_packet, BoxStream, PacketReader, TlsSetupError};

#[derive(Debug, Clone)]
pub struct BrokerConfig {
    pub listen: String,
    pub level: SecurityLevel,
    pub password_file: Option<PathBuf>,
    pub acl_file: Option<PathBuf>,
    pub tls_cert: Option<PathBuf>,
    pub tls_key: Option<PathBuf>,
    /// How often the ACL file's modification time is checked. Zero disables polling.
    pub acl_poll_interval: Duration,
    /// Resend interval for unacknowledged QoS 1 deliveries.
    pub retransmit_interval: Duration,
    pub connect_timeout: Duration,
}

impl BrokerConfig {
    pub fn new(listen: impl Into<String>, level: SecurityLevel) -> Self {
        BrokerConfig {
            listen: listen.into(),
            level,
            password_file: None,
            acl_file: None,
            tls_cert: None,
            tls_key: None,
            acl_poll_interval: Duration::from_millis(500),
            retransmit_interval: Duration::from_secs(5),
            connect_timeout: Duration::from_secs(10),
        }
    }

    /// Checks that every file the level's policies need is configured.
    pub fn validate(&self) -> Result<(), BrokerError> {
        if self.level.has(Policy::Encryption) && (self.tls_cert.is_none() || self.tls_key.is_none()) {
            return Err(BrokerError::MissingTlsMaterial(self.level));
        }
        if self.level.has(Policy::Authentication) && self.password_file.is_none() {
            return Err(BrokerError::MissingPasswordFile(self.level));
        }
        if self.level.has(Policy::Authorization) && self.acl_file.is_none() {
            return Err(BrokerError::MissingAclFile(self.level));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum BrokerError {
    #[error("security level {0} requires a TLS certificate and key")]
    MissingTlsMaterial(SecurityLevel),
    #[error("security level {0} requires a password file")]
    MissingPasswordFile(SecurityLevel),
    #[error("security level {0} requires an ACL file")]
    MissingAclFile(SecurityLevel),
    #[error("binding {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error(transparent)]
    PasswordFile(#[from] PasswordFileError),
    #[error("reading ACL file {path}: {source}")]
    AclRead { path: String, source: std::io::Error },
    #[error("ACL file: {0}")]
    AclParse(#[from] AclParseError),
    #[error("no ACL file configured")]
    NoAclFile,
    #[error(transparent)]
    Tls(#[from] TlsSetupError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuthOutcome {
    Accept,
    Reject(u8),
}

/// Decides CONNECT acceptance for a security level.
///
/// Without the authentication policy anonymous clients are welcome, but
/// credentials that are presented must still verify when a password file
/// is configured. With it, missing credentials get return code 5 and wrong
/// ones return code 4.
pub fn authenticate(connect: &Connect, level: SecurityLevel, credentials: Option<&CredentialStore>) -> AuthOutcome {
    let verify = |user: &str, password: Option<&[u8]>| match (credentials, password) {
        (Some(store), Some(pw)) if store.verify(user, pw) => AuthOutcome::Accept,
        _ => AuthOutcome::Reject(connack::BAD_USERNAME_OR_PASSWORD),
    };
    match (&connect.username, level.has(Policy::Authentication)) {
        (None, true) => AuthOutcome::Reject(connack::NOT_AUTHORIZED),
        (Some(user), true) => verify(user, connect.password.as_deref()),
        (Some(user), false) if credentials.is_some() => verify(user, connect.password.as_deref()),
        _ => AuthOutcome::Accept,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Session {
    pub client_id: String,
    pub username: Option<String>,
    pub subscriptions: Vec<(TopicFilter, QoS)>,
    pub connected: bool,
}

impl Session {
    pub fn new(client_id: impl Into<String>, username: Option<String>) -> Self {
        Session { client_id: client_id.into(), username, subscriptions: Vec::new(), connected: true }
    }

    /// ACL identity: anonymous clients map to the empty username.
    pub fn acl_user(&self) -> &str {
        self.username.as_deref().unwrap_or("")
    }
}

pub fn authorize_publish(level: SecurityLevel, acl: &AclDocument, session: &Session, topic: &TopicName) -> Decision {
    if level.has(Policy::Authorization) {
        acl::check_publish(acl, session.acl_user(), topic)
    } else {
        Decision::Allow
    }
}

pub fn authorize_subscribe(
    level: SecurityLevel,
    acl: &AclDocument,
    session: &Session,
    filter: &TopicFilter,
) -> Decision {
    if level.has(Policy::Authorization) {
        acl::check_subscribe(acl, session.acl_user(), filter)
    } else {
        Decision::Allow
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Delivery {
    pub client_id: String,
    pub topic: TopicName,
    pub payload: Vec<u8>,
    pub qos: QoS,
}

/// One delivery per matching subscription entry of every connected
/// session, at the lower of the publish and subscription QoS.
pub fn route<'a>(sessions: impl IntoIterator<Item = &'a Session>, publish: &Publish) -> Vec<Delivery> {
    let mut out = Vec::new();
    for s in sessions.into_iter().filter(|s| s.connected) {
        for (filter, sub_qos) in &s.subscriptions {
            if filter_matches(filter, &publish.topic) {
                out.push(Delivery {
                    client_id: s.client_id.clone(),
                    topic: publish.topic.clone(),
                    payload: publish.payload.clone(),
                    qos: publish.qos.min(*sub_qos),
                });
            }
        }
    }
    out
}

enum Outbound {
    Packet(Packet),
    Deliver { topic: TopicName, payload: Vec<u8>, qos: QoS },
    Acked(u16),
}

struct SessionEntry {
    conn_id: u64,
    session: Session,
    tx: mpsc::UnboundedSender<Outbound>,
    kick: Arc<Notify>,
}

struct Shared {
    level: SecurityLevel,
    credentials: Option<CredentialStore>,
    acl: RwLock<Arc<AclDocument>>,
    acl_path: Option<PathBuf>,
    sessions: Mutex<HashMap<String, SessionEntry>>,
    next_conn: AtomicU64,
    retransmit: Duration,
    connect_timeout: Duration,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReloadOutcome {
    pub rules: usize,
    /// `(client_id, filter)` pairs removed because the new policy denies them.
    pub revoked: Vec<(String, TopicFilter)>,
}

/// Control handle of a running broker. Cheap to clone.
#[derive(Clone)]
pub struct BrokerHandle {
    inner: Arc<HandleInner>,
}

struct HandleInner {
    local_addr: SocketAddr,
    shared: Arc<Shared>,
    stop: watch::Sender<bool>,
    tasks: Mutex<Vec<JoinHandle<()>>>,
}

fn read_acl(path: &Path) -> Result<AclDocument, BrokerError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| BrokerError::AclRead { path: path.display().to_string(), source })?;
    Ok(acl::parse_acl(&text)?)
}

/// Loads configuration files, binds the listener and starts serving.
pub async fn start(config: BrokerConfig) -> Result<BrokerHandle, BrokerError> {
    config.validate()?;
    let credentials = config.password_file.as_deref().map(CredentialStore::load).transpose()?;
    let acl_doc = config.acl_file.as_deref().map(read_acl).transpose()?.unwrap_or_default();
    let tls = match (&config.tls_cert, &config.tls_key, config.level.has(Policy::Encryption)) {
        (Some(cert), Some(key), true) => Some(TlsAcceptor::from(server_config(cert, key)?)),
        _ => None,
    };
    let listener = TcpListener::bind(&config.listen)
        .await
        .map_err(|source| BrokerError::Bind { addr: config.listen.clone(), source })?;
    let local_addr =
        listener.local_addr().map_err(|source| BrokerError::Bind { addr: config.listen.clone(), source })?;

    let shared = Arc::new(Shared {
        level: config.level,
        credentials,
        acl: RwLock::new(Arc::new(acl_doc)),
        acl_path: config.acl_file.clone(),
        sessions: Mutex::new(HashMap::new()),
        next_conn: AtomicU64::new(1),
        retransmit: config.retransmit_interval,
        connect_timeout: config.connect_timeout,
    });
    let (stop, stop_rx) = watch::channel(false);
    let handle = BrokerHandle {
        inner: Arc::new(HandleInner { local_addr, shared: shared.clone(), stop, tasks: Mutex::new(Vec::new()) }),
    };

    let accept = tokio::spawn(accept_loop(listener, tls, shared.clone(), stop_rx.clone()));
    let mut tasks = vec![accept];
    if let (Some(path), false) = (&config.acl_file, config.acl_poll_interval.is_zero()) {
        tasks.push(tokio::spawn(poll_acl(handle.clone(), path.clone(), config.acl_poll_interval, stop_rx)));
    }
    handle.inner.tasks.lock().unwrap().extend(tasks);
    info!(event = "listening", addr = %local_addr, level = %config.level, tls = config.level.has(Policy::Encryption));
    Ok(handle)
}

impl BrokerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.inner.local_addr
    }

    pub fn level(&self) -> SecurityLevel {
        self.inner.shared.level
    }

    pub fn acl_snapshot(&self) -> Arc<AclDocument> {
        self.inner.shared.acl.read().unwrap().clone()
    }

    pub fn session_count(&self) -> usize {
        self.inner.shared.sessions.lock().unwrap().len()
    }

    pub fn subscriptions_of(&self, client_id: &str) -> Option<Vec<(TopicFilter, QoS)>> {
        let sessions = self.inner.shared.sessions.lock().unwrap();
        sessions.get(client_id).map(|e| e.session.subscriptions.clone())
    }

    /// Re-reads the ACL file. On failure the previous policy stays active.
    pub fn reload_acl(&self) -> Result<ReloadOutcome, BrokerError> {
        let shared = &self.inner.shared;
        let path = shared.acl_path.as_deref().ok_or(BrokerError::NoAclFile)?;
        let doc = match read_acl(path) {
            Ok(doc) => doc,
            Err(e) => {
                warn!(event = "acl_reload", decision = "rejected", error = %e);
                return Err(e);
            }
        };
        Ok(self.install_acl(doc))
    }

    /// Swaps in `doc` and revokes subscriptions it no longer allows.
    pub fn install_acl(&self, doc: AclDocument) -> ReloadOutcome {
        let shared = &self.inner.shared;
        let rules = doc.rules.len();
        let doc = Arc::new(doc);
        let mut revoked = Vec::new();
        let mut sessions = shared.sessions.lock().unwrap();
        *shared.acl.write().unwrap() = doc.clone();
        if shared.level.has(Policy::Authorization) {
            for entry in sessions.values_mut() {
                let session = &entry.session;
                let (keep, drop): (Vec<_>, Vec<_>) = session
                    .subscriptions
                    .iter()
                    .cloned()
                    .partition(|(f, _)| authorize_subscribe(shared.level, &doc, session, f).is_allow());
                for (f, _) in drop {
                    info!(event = "revoke", client_id = %session.client_id, topic = %f, decision = "deny");
                    revoked.push((session.client_id.clone(), f));
                }
                entry.session.subscriptions = keep;
            }
        }
        drop(sessions);
        info!(event = "acl_reload", rules, revoked = revoked.len(), decision = "applied");
        ReloadOutcome { rules, revoked }
    }

    /// Stops accepting, closes every session and waits for background tasks.
    pub async fn stop(&self) {
        let _ = self.inner.stop.send(true);
        for entry in self.inner.shared.sessions.lock().unwrap().values() {
            entry.kick.notify_one();
        }
        let tasks: Vec<_> = self.inner.tasks.lock().unwrap().drain(..).collect();
        for t in tasks {
            let _ = t.await;
        }
    }
}

async fn poll_acl(handle: BrokerHandle, path: PathBuf, every: Duration, mut stop: watch::Receiver<bool>) {
    let stamp = |p: &Path| std::fs::metadata(p).ok().map(|m| (m.modified().unwrap_or(SystemTime::UNIX_EPOCH), m.len()));
    let mut last = stamp(&path);
    let mut tick = tokio::time::interval(every);
    tick.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    loop {
        tokio::select! {
            _ = tick.tick() => {}
            _ = stop.changed() => return,
        }
        let now = stamp(&path);
        if now != last {
            last = now;
            debug!(event = "acl_changed", path = %path.display());
            let _ = handle.reload_acl();
        }
    }
}

async fn accept_loop(
    listener: TcpListener,
    tls: Option<TlsAcceptor>,
    shared: Arc<Shared>,
    mut stop: watch::Receiver<bool>,
) {
    loop {
        let (tcp, peer) = tokio::select! {
            r = listener.accept() => match r {
                Ok(x) => x,
                Err(e) => {
                    warn!(event = "accept_error", error = %e);
                    tokio::time::sleep(Duration::from_millis(50)).await;
                    continue;
                }
            },
            _ = stop.changed() => return,
        };
        let shared = shared.clone();
        let tls = tls.clone();
        tokio::spawn(async move {
            let _ = tcp.set_nodelay(true);
            let stream = match upgrade(tcp, tls, shared.connect_timeout).await {
                Ok(s) => s,
                Err(e) => {
                    info!(event = "tls_handshake", peer = %peer, decision = "deny", error = %e);
                    return;
                }
            };
            serve_connection(shared, stream, peer).await;
        });
    }
}

async fn upgrade(tcp: TcpStream, tls: Option<TlsAcceptor>, limit: Duration) -> std::io::Result<BoxStream> {
    match tls {
        None => Ok(Box::new(tcp)),
        Some(acceptor) => {
            let s = tokio::time::timeout(limit, acceptor.accept(tcp))
                .await
                .map_err(|_| std::io::Error::new(std::io::ErrorKind::TimedOut, "TLS handshake timed out"))??;
            Ok(Box::new(s))
        }
    }
}

async fn serve_connection(shared: Arc<Shared>, stream: BoxStream, peer: SocketAddr) {
    let (read_half, mut write_half) = tokio::io::split(stream);
    let mut reader = PacketReader::new(read_half);

    let connect = match tokio::time::timeout(shared.connect_timeout, reader.next()).await {
        Ok(Ok(Some(Packet::Connect(c)))) => c,
        Ok(Err(crate::transport::FrameError::Protocol(p1451_core::mqtt::MqttError::UnsupportedProtocol))) => {
            let _ = write_packet(
                &mut write_half,
                &Packet::Connack { session_present: false, return_code: connack::UNACCEPTABLE_PROTOCOL },
            )
            .await;
            return;
        }
        other => {
            debug!(event = "connect", peer = %peer, decision = "deny", reason = ?other.map(|r| r.map(|_| ())));
            return;
        }
    };

    let outcome = authenticate(&connect, shared.level, shared.credentials.as_ref());
    let client_id = if connect.client_id.is_empty() {
        format!("auto-{}", uuid::Uuid::new_v4().simple())
    } else {
        connect.client_id.clone()
    };
    if let AuthOutcome::Reject(code) = outcome {
        info!(event = "connect", client_id = %client_id, user = ?connect.username, decision = "deny", return_code = code);
        let _ = write_packet(&mut write_half, &Packet::Connack { session_present: false, return_code: code }).await;
        return;
    }

    let conn_id = shared.next_conn.fetch_add(1, Ordering::Relaxed);
    let (tx, rx) = mpsc::unbounded_channel();
    let kick = Arc::new(Notify::new());
    {
        let mut sessions = shared.sessions.lock().unwrap();
        let entry = SessionEntry {
            conn_id,
            session: Session::new(client_id.clone(), connect.username.clone()),
            tx: tx.clone(),
            kick: kick.clone(),
        };
        if let Some(old) = sessions.insert(client_id.clone(), entry) {
            info!(event = "takeover", client_id = %client_id);
            old.kick.notify_one();
        }
    }
    info!(event = "connect", client_id = %client_id, user = ?connect.username, decision = "allow");
    let _ = tx.send(Outbound::Packet(Packet::Connack { session_present: false, return_code: connack::ACCEPTED }));

    let writer = tokio::spawn(write_loop(write_half, rx, shared.retransmit, kick.clone()));
    let keep_alive = (connect.keep_alive > 0).then(|| Duration::from_millis(connect.keep_alive as u64 * 1500));

    loop {
        let next = async {
            match keep_alive {
                Some(limit) => tokio::time::timeout(limit, reader.next()).await.ok(),
                None => Some(reader.next().await),
            }
        };
        let packet = tokio::select! {
            r = next => r,
            _ = kick.notified() => break,
        };
        let packet = match packet {
            None => {
                info!(event = "keepalive_timeout", client_id = %client_id);
                break;
            }
            Some(Ok(Some(p))) => p,
            Some(Ok(None)) => break,
            Some(Err(e)) => {
                info!(event = "protocol_error", client_id = %client_id, error = %e);
                break;
            }
        };
        match packet {
            Packet::Publish(p) => on_publish(&shared, &client_id, conn_id, &tx, p),
            Packet::Puback { packet_id } => {
                let _ = tx.send(Outbound::Acked(packet_id));
            }
            Packet::Subscribe { packet_id, entries } => {
                on_subscribe(&shared, &client_id, conn_id, &tx, packet_id, entries)
            }
            Packet::Unsubscribe { packet_id, filters } => {
                if let Some(e) = shared.sessions.lock().unwrap().get_mut(&client_id).filter(|e| e.conn_id == conn_id) {
                    e.session.subscriptions.retain(|(f, _)| !filters.contains(f));
                }
                let _ = tx.send(Outbound::Packet(Packet::Unsuback { packet_id }));
            }
            Packet::Pingreq => {
                let _ = tx.send(Outbound::Packet(Packet::Pingresp));
            }
            Packet::Disconnect => break,
            other => {
                info!(event = "protocol_error", client_id = %client_id, packet = ?other);
                break;
            }
        }
    }

    {
        let mut sessions = shared.sessions.lock().unwrap();
        if sessions.get(&client_id).is_some_and(|e| e.conn_id == conn_id) {
            sessions.remove(&client_id);
        }
    }
    drop(tx);
    let _ = writer.await;
    info!(event = "disconnect", client_id = %client_id);
}

fn on_publish(shared: &Shared, client_id: &str, conn_id: u64, tx: &mpsc::UnboundedSender<Outbound>, p: Publish) {
    let acl = shared.acl.read().unwrap().clone();
    let sessions = shared.sessions.lock().unwrap();
    let Some(me) = sessions.get(client_id).filter(|e| e.conn_id == conn_id) else { return };
    let decision = authorize_publish(shared.level, &acl, &me.session, &p.topic);
    info!(event = "publish", client_id = %client_id, topic = %p.topic, decision = %decision);
    if decision.is_allow() {
        let deliveries = route(sessions.values().map(|e| &e.session), &p);
        for d in deliveries {
            if let Some(target) = sessions.get(&d.client_id) {
                let _ = target.tx.send(Outbound::Deliver { topic: d.topic, payload: d.payload, qos: d.qos });
            }
        }
    }
    drop(sessions);
    // Denied publishes are acknowledged too: 3.1.1 has no negative PUBACK.
    if let Some(id) = p.packet_id {
        let _ = tx.send(Outbound::Packet(Packet::Puback { packet_id: id }));
    }
}

fn on_subscribe(
    shared: &Shared,
    client_id: &str,
    conn_id: u64,
    tx: &mpsc::UnboundedSender<Outbound>,
    packet_id: u16,
    entries: Vec<(TopicFilter, QoS)>,
) {
    let mut sessions = shared.sessions.lock().unwrap();
    let acl = shared.acl.read().unwrap().clone();
    let Some(me) = sessions.get_mut(client_id).filter(|e| e.conn_id == conn_id) else { return };
    let mut codes = Vec::with_capacity(entries.len());
    for (filter, qos) in entries {
        let decision = authorize_subscribe(shared.level, &acl, &me.session, &filter);
        info!(event = "subscribe", client_id = %client_id, topic = %filter, decision = %decision);
        if decision.is_allow() {
            match me.session.subscriptions.iter_mut().find(|(f, _)| *f == filter) {
                Some(existing) => existing.1 = qos,
                None => me.session.subscriptions.push((filter, qos)),
            }
            codes.push(qos as u8);
        } else {
            codes.push(SUBACK_FAILURE);
        }
    }
    let _ = tx.send(Outbound::Packet(Packet::Suback { packet_id, return_codes: codes }));
}

async fn write_loop(
    mut w: tokio::io::WriteHalf<BoxStream>,
    mut rx: mpsc::UnboundedReceiver<Outbound>,
    retransmit: Duration,
    kick: Arc<Notify>,
) {
    let mut inflight: BTreeMap<u16, Publish> = BTreeMap::new();
    let mut next_id: u16 = 0;
    let mut tick = tokio::time::interval(retransmit);
    tick.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    tick.tick().await;
    loop {
        let result = tokio::select! {
            msg = rx.recv() => match msg {
                None => break,
                Some(Outbound::Packet(p)) => write_packet(&mut w, &p).await,
                Some(Outbound::Acked(id)) => {
                    inflight.remove(&id);
                    Ok(())
                }
                Some(Outbound::Deliver { topic, payload, qos }) => {
                    let mut publish = Publish::new(topic, payload, qos, None);
                    if qos == QoS::AtLeastOnce {
                        if inflight.len() >= u16::MAX as usize - 1 {
                            warn!(event = "inflight_full");
                            continue;
                        }
                        loop {
                            next_id = next_id.wrapping_add(1).max(1);
                            if !inflight.contains_key(&next_id) {
                                break;
                            }
                        }
                        publish.packet_id = Some(next_id);
                        inflight.insert(next_id, publish.clone());
                    }
                    write_packet(&mut w, &Packet::Publish(publish)).await
                }
            },
            _ = tick.tick() => {
                let mut r = Ok(());
                for p in inflight.values() {
                    let mut again = p.clone();
                    again.dup = true;
                    r = write_packet(&mut w, &Packet::Publish(again)).await;
                    if r.is_err() {
                        break;
                    }
                }
                r
            }
        };
        if result.is_err() {
            kick.notify_one();
            break;
        }
    }
    let _ = tokio::io::AsyncWriteExt::shutdown(&mut w).await;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auth::Credential;
    use p1451_core::acl::{Access, AclRule};

    fn connect(user: Option<&str>, pass: Option<&str>) -> Connect {
        Connect {
            client_id: "c".into(),
            username: user.map(Into::into),
            password: pass.map(|p| p.as_bytes().to_vec()),
            keep_alive: 0,
            clean_session: true,
        }
    }

    fn store() -> CredentialStore {
        CredentialStore::from_credentials([Credential::new("ncap", b"good")])
    }

    #[test]
    fn authentication_decision_table() {
        let s = store();
        use SecurityLevel::*;
        for level in [B, C, D, E] {
            assert_eq!(authenticate(&connect(None, None), level, Some(&s)), AuthOutcome::Reject(5));
            assert_eq!(authenticate(&connect(Some("ncap"), Some("bad")), level, Some(&s)), AuthOutcome::Reject(4));
            assert_eq!(authenticate(&connect(Some("ncap"), None), level, Some(&s)), AuthOutcome::Reject(4));
            assert_eq!(authenticate(&connect(Some("ncap"), Some("good")), level, Some(&s)), AuthOutcome::Accept);
        }
        for level in [N, A] {
            assert_eq!(authenticate(&connect(None, None), level, None), AuthOutcome::Accept);
            assert_eq!(authenticate(&connect(None, None), level, Some(&s)), AuthOutcome::Accept);
            assert_eq!(authenticate(&connect(Some("x"), Some("y")), level, None), AuthOutcome::Accept);
            assert_eq!(authenticate(&connect(Some("ncap"), Some("bad")), level, Some(&s)), AuthOutcome::Reject(4));
            assert_eq!(authenticate(&connect(Some("ncap"), Some("good")), level, Some(&s)), AuthOutcome::Accept);
        }
    }

    #[test]
    fn config_validation() {
        let mut c = BrokerConfig::new("127.0.0.1:0", SecurityLevel::N);
        assert!(c.validate().is_ok());
        c.level = SecurityLevel::E;
        c.password_file = Some("p".into());
        c.acl_file = Some("a".into());
        c.tls_cert = Some("c".into());
        assert!(matches!(c.validate(), Err(BrokerError::MissingTlsMaterial(_))));
        c.tls_key = Some("k".into());
        assert!(c.validate().is_ok());
        c.level = SecurityLevel::D;
        c.acl_file = None;
        assert!(matches!(c.validate(), Err(BrokerError::MissingAclFile(_))));
        c.level = SecurityLevel::B;
        c.password_file = None;
        assert!(matches!(c.validate(), Err(BrokerError::MissingPasswordFile(_))));
    }

    #[test]
    fn authorization_depends_on_level() {
        let f = TopicFilter::new("1451.1.6/x").unwrap();
        let t = TopicName::new("1451.1.6/x").unwrap();
        let s = Session::new("c", Some("ncap".into()));
        let empty = AclDocument::default();
        assert!(authorize_publish(SecurityLevel::C, &empty, &s, &t).is_allow());
        assert!(authorize_subscribe(SecurityLevel::C, &empty, &s, &f).is_allow());
        assert!(!authorize_publish(SecurityLevel::E, &empty, &s, &t).is_allow());
        assert!(!authorize_subscribe(SecurityLevel::D, &empty, &s, &f).is_allow());
        let doc = AclDocument::new(vec![AclRule::new("ncap", Access::ReadWrite, f.clone())]);
        assert!(authorize_publish(SecurityLevel::E, &doc, &s, &t).is_allow());
        assert!(authorize_subscribe(SecurityLevel::E, &doc, &s, &f).is_allow());
        let anon = Session::new("c", None);
        assert!(!authorize_subscribe(SecurityLevel::E, &doc, &anon, &f).is_allow());
    }

    #[test]
    fn routing_per_subscription_entry() {
        let t = TopicName::new("a/b").unwrap();
        let mut s1 = Session::new("one", None);
        s1.subscriptions = vec![
            (TopicFilter::new("a/#").unwrap(), QoS::AtLeastOnce),
            (TopicFilter::new("a/+").unwrap(), QoS::AtMostOnce),
        ];
        let mut s2 = Session::new("two", None);
        s2.subscriptions = vec![(TopicFilter::new("b/#").unwrap(), QoS::AtLeastOnce)];
        let mut s3 = Session::new("three", None);
        s3.subscriptions = vec![(TopicFilter::new("a/b").unwrap(), QoS::AtLeastOnce)];
        s3.connected = false;
        let p = Publish::new(t.clone(), b"x".to_vec(), QoS::AtLeastOnce, Some(1));
        let d = route([&s1, &s2, &s3], &p);
        assert_eq!(d.len(), 2);
        assert!(d.iter().all(|d| d.client_id == "one"));
        assert_eq!(d[0].qos, QoS::AtLeastOnce);
        assert_eq!(d[1].qos, QoS::AtMostOnce);
        let p0 = Publish::new(t, b"x".to_vec(), QoS::AtMostOnce, None);
        assert!(route([&s1], &p0).iter().all(|d| d.qos == QoS::AtMostOnce));
        assert!(route([&s2], &p0).is_empty());
    }
}
