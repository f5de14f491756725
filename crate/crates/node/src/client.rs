//! Small async MQTT client used by the NCAP, ACS and APP roles.

use std::collections::HashMap;
use std::time::Duration;

use p1451_core::mqtt::{connack, Connect, MqttError, Packet, Publish, QoS, TopicFilter, TopicName};
use thiserror::Error;
use tokio::net::TcpStream;
use tokio::sync::{mpsc, oneshot};
use tokio::task::JoinHandle;
use tokio_rustls::TlsConnector;
use tracing::debug;

use crate::transport::{
    client_config, server_name, split_endpoint, write_packet, BoxStream, FrameError, PacketReader, TlsClientOptions,
    TlsSetupError,
};

#[derive(Debug, Clone)]
pub struct ClientOptions {
    pub endpoint: String,
    pub client_id: String,
    pub username: Option<String>,
    pub password: Option<String>,
    pub keep_alive: u16,
    pub tls: Option<TlsClientOptions>,
    pub connect_timeout: Duration,
    /// Resend interval for unacknowledged QoS 1 publishes.
    pub retransmit_interval: Duration,
}

impl ClientOptions {
    pub fn new(endpoint: impl Into<String>, client_id: impl Into<String>) -> Self {
        ClientOptions {
            endpoint: endpoint.into(),
            client_id: client_id.into(),
            username: None,
            password: None,
            keep_alive: 30,
            tls: None,
            connect_timeout: Duration::from_secs(5),
            retransmit_interval: Duration::from_secs(5),
        }
    }

    pub fn credentials(mut self, username: Option<String>, password: Option<String>) -> Self {
        self.username = username;
        self.password = password;
        self
    }

    pub fn tls(mut self, tls: Option<TlsClientOptions>) -> Self {
        self.tls = tls;
        self
    }
}

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Tls(#[from] TlsSetupError),
    #[error("connection refused by broker: {}", connack_reason(*.0))]
    Refused(u8),
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("connection closed")]
    Closed,
    #[error("timed out")]
    Timeout,
    #[error("bad endpoint {0:?}, expected host:port")]
    Endpoint(String),
}

impl ClientError {
    /// Refusals for missing or wrong credentials.
    pub fn is_auth(&self) -> bool {
        matches!(self, ClientError::Refused(connack::BAD_USERNAME_OR_PASSWORD | connack::NOT_AUTHORIZED))
    }
}

impl From<FrameError> for ClientError {
    fn from(e: FrameError) -> Self {
        match e {
            FrameError::Io(e) => ClientError::Io(e),
            other => ClientError::Protocol(other.to_string()),
        }
    }
}

impl From<MqttError> for ClientError {
    fn from(e: MqttError) -> Self {
        ClientError::Protocol(e.to_string())
    }
}

pub fn connack_reason(code: u8) -> &'static str {
    match code {
        connack::ACCEPTED => "accepted",
        connack::UNACCEPTABLE_PROTOCOL => "unacceptable protocol version",
        connack::IDENTIFIER_REJECTED => "identifier rejected",
        connack::SERVER_UNAVAILABLE => "server unavailable",
        connack::BAD_USERNAME_OR_PASSWORD => "bad user name or password",
        connack::NOT_AUTHORIZED => "not authorized",
        _ => "unknown return code",
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub topic: TopicName,
    pub payload: Vec<u8>,
    pub qos: QoS,
}

enum Command {
    Subscribe { filter: TopicFilter, qos: QoS, done: oneshot::Sender<u8> },
    Publish { publish: Publish, done: oneshot::Sender<()> },
    Disconnect { done: oneshot::Sender<()> },
}

pub struct MqttClient {
    commands: mpsc::UnboundedSender<Command>,
    task: JoinHandle<()>,
}

async fn open_stream(opts: &ClientOptions) -> Result<BoxStream, ClientError> {
    let (host, port) = split_endpoint(&opts.endpoint).ok_or_else(|| ClientError::Endpoint(opts.endpoint.clone()))?;
    let tcp = TcpStream::connect((host, port)).await?;
    let _ = tcp.set_nodelay(true);
    match &opts.tls {
        None => Ok(Box::new(tcp)),
        Some(tls) => {
            let connector = TlsConnector::from(client_config(tls)?);
            let name = server_name(tls.server_name.as_deref().unwrap_or(host))?;
            Ok(Box::new(connector.connect(name, tcp).await?))
        }
    }
}

impl MqttClient {
    /// Connects and completes the CONNECT/CONNACK exchange. Incoming
    /// application messages arrive on the returned receiver, which closes
    /// when the connection ends.
    pub async fn connect(opts: ClientOptions) -> Result<(MqttClient, mpsc::UnboundedReceiver<Message>), ClientError> {
        let limit = opts.connect_timeout;
        tokio::time::timeout(limit, Self::connect_inner(opts)).await.map_err(|_| ClientError::Timeout)?
    }

    async fn connect_inner(opts: ClientOptions) -> Result<(MqttClient, mpsc::UnboundedReceiver<Message>), ClientError> {
        let stream = open_stream(&opts).await?;
        let (r, mut w) = tokio::io::split(stream);
        let mut reader = PacketReader::new(r);
        let connect = Connect {
            client_id: opts.client_id.clone(),
            username: opts.username.clone(),
            password: opts.password.as_ref().map(|p| p.as_bytes().to_vec()),
            keep_alive: opts.keep_alive,
            clean_session: true,
        };
        write_packet(&mut w, &Packet::Connect(connect)).await?;
        match reader.next().await? {
            Some(Packet::Connack { return_code: connack::ACCEPTED, .. }) => {}
            Some(Packet::Connack { return_code, .. }) => return Err(ClientError::Refused(return_code)),
            Some(other) => return Err(ClientError::Protocol(format!("expected CONNACK, got {other:?}"))),
            None => return Err(ClientError::Closed),
        }
        let (commands, rx) = mpsc::unbounded_channel();
        let (messages, inbox) = mpsc::unbounded_channel();
        let task = tokio::spawn(event_loop(reader, w, rx, messages, opts));
        Ok((MqttClient { commands, task }, inbox))
    }

    /// Returns the SUBACK code: the granted QoS or 0x80.
    pub async fn subscribe(&self, filter: TopicFilter, qos: QoS) -> Result<u8, ClientError> {
        let (done, wait) = oneshot::channel();
        self.commands.send(Command::Subscribe { filter, qos, done }).map_err(|_| ClientError::Closed)?;
        wait.await.map_err(|_| ClientError::Closed)
    }

    /// At QoS 1, resolves once the broker's PUBACK arrives.
    pub async fn publish(&self, topic: TopicName, payload: Vec<u8>, qos: QoS) -> Result<(), ClientError> {
        let (done, wait) = oneshot::channel();
        let publish = Publish::new(topic, payload, qos, None);
        self.commands.send(Command::Publish { publish, done }).map_err(|_| ClientError::Closed)?;
        wait.await.map_err(|_| ClientError::Closed)
    }

    pub async fn disconnect(self) {
        let (done, wait) = oneshot::channel();
        if self.commands.send(Command::Disconnect { done }).is_ok() {
            let _ = wait.await;
        }
        let _ = self.task.await;
    }

    pub fn is_closed(&self) -> bool {
        self.task.is_finished()
    }
}

async fn event_loop(
    mut reader: PacketReader<tokio::io::ReadHalf<BoxStream>>,
    mut w: tokio::io::WriteHalf<BoxStream>,
    mut commands: mpsc::UnboundedReceiver<Command>,
    messages: mpsc::UnboundedSender<Message>,
    opts: ClientOptions,
) {
    let mut next_id: u16 = 0;
    let mut alloc = |busy: &dyn Fn(u16) -> bool| loop {
        next_id = next_id.wrapping_add(1).max(1);
        if !busy(next_id) {
            return next_id;
        }
    };
    let mut subs: HashMap<u16, oneshot::Sender<u8>> = HashMap::new();
    let mut inflight: HashMap<u16, (Publish, oneshot::Sender<()>)> = HashMap::new();
    let ping_every = Duration::from_secs(opts.keep_alive.max(1) as u64);
    let mut ping = tokio::time::interval(ping_every);
    ping.tick().await;
    let mut resend = tokio::time::interval(opts.retransmit_interval);
    resend.tick().await;

    loop {
        let result: Result<(), ClientError> = tokio::select! {
            incoming = reader.next() => match incoming {
                Ok(Some(packet)) => match packet {
                    Packet::Publish(p) => {
                        let ack = p.packet_id.map(|packet_id| Packet::Puback { packet_id });
                        let _ = messages.send(Message { topic: p.topic, payload: p.payload, qos: p.qos });
                        match ack {
                            Some(a) => write_packet(&mut w, &a).await.map_err(Into::into),
                            None => Ok(()),
                        }
                    }
                    Packet::Puback { packet_id } => {
                        if let Some((_, done)) = inflight.remove(&packet_id) {
                            let _ = done.send(());
                        }
                        Ok(())
                    }
                    Packet::Suback { packet_id, return_codes } => {
                        if let Some(done) = subs.remove(&packet_id) {
                            let _ = done.send(return_codes.first().copied().unwrap_or(0x80));
                        }
                        Ok(())
                    }
                    Packet::Pingresp | Packet::Unsuback { .. } => Ok(()),
                    other => Err(ClientError::Protocol(format!("unexpected {other:?}"))),
                },
                Ok(None) => Err(ClientError::Closed),
                Err(e) => Err(e.into()),
            },
            cmd = commands.recv() => match cmd {
                None => break,
                Some(Command::Disconnect { done }) => {
                    let _ = write_packet(&mut w, &Packet::Disconnect).await;
                    let _ = tokio::io::AsyncWriteExt::shutdown(&mut w).await;
                    let _ = done.send(());
                    break;
                }
                Some(Command::Subscribe { filter, qos, done }) => {
                    let id = alloc(&|id| subs.contains_key(&id) || inflight.contains_key(&id));
                    subs.insert(id, done);
                    write_packet(&mut w, &Packet::Subscribe { packet_id: id, entries: vec![(filter, qos)] }).await.map_err(Into::into)
                }
                Some(Command::Publish { mut publish, done }) => {
                    if publish.qos == QoS::AtLeastOnce {
                        let id = alloc(&|id| subs.contains_key(&id) || inflight.contains_key(&id));
                        publish.packet_id = Some(id);
                        let r = write_packet(&mut w, &Packet::Publish(publish.clone())).await;
                        inflight.insert(id, (publish, done));
                        r.map_err(Into::into)
                    } else {
                        let r = write_packet(&mut w, &Packet::Publish(publish)).await;
                        let _ = done.send(());
                        r.map_err(Into::into)
                    }
                }
            },
            _ = ping.tick() => write_packet(&mut w, &Packet::Pingreq).await.map_err(Into::into),
            _ = resend.tick() => {
                let mut r = Ok(());
                for (p, _) in inflight.values() {
                    let mut again = p.clone();
                    again.dup = true;
                    if let Err(e) = write_packet(&mut w, &Packet::Publish(again)).await {
                        r = Err(e.into());
                        break;
                    }
                }
                r
            }
        };
        if let Err(e) = result {
            debug!(event = "client_closed", client_id = %opts.client_id, error = %e);
            break;
        }
    }
}
