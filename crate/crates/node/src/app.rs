//! APP side: read-TEDS request/reply over MQTT, ACL update requests, and
//! offline TEDS tooling.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Duration;

use p1451_core::mqtt::{QoS, TopicFilter, TopicName, SUBACK_FAILURE};
use p1451_core::netsvc::{
    command_topic, correlate, decode_reply, encode_command, error_code, reply_topic, ReadTedsCommand, ReadTedsReply,
    TimeDuration, Uuid1451,
};
use p1451_core::teds::{
    decode_security_teds, encode_security_teds, parse_description, standard_name, tls_version_name, DescriptionError,
    SecurityTeds, TedsError, SECURITY_TEDS_ACCESS_CODE, STANDARD_TLS,
};
use thiserror::Error;
use tokio::time::Instant;
use tracing::debug;

use crate::acs::{self, AclUpdateRequest, AclUpdateResult, Status};
use crate::client::{ClientError, ClientOptions, MqttClient};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(2);
pub const DEFAULT_ACL_WAIT: Duration = Duration::from_secs(5);

/// Process exit statuses of the command-line tool.
pub mod exit {
    pub const OK: i32 = 0;
    pub const FAILURE: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const TIMEOUT: i32 = 3;
    pub const AUTH: i32 = 4;
    pub const PROTOCOL: i32 = 5;
    pub const DECODE: i32 = 6;
    pub const REMOTE_ERROR: i32 = 7;
    pub const ACL_REJECTED: i32 = 8;
}

#[derive(Debug, Error)]
pub enum AppError {
    #[error("no reply before the {0:?} deadline")]
    Timeout(Duration),
    #[error("broker refused the connection: {0}")]
    Auth(ClientError),
    #[error("broker denied subscription to {0}")]
    SubscribeDenied(TopicFilter),
    #[error("{0}")]
    Connect(ClientError),
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("NCAP replied with error code {code} ({})", error_code::describe(*.code))]
    Remote { code: u16, reply: Box<ReadTedsReply> },
    #[error("decoding TEDS: {0}")]
    Decode(#[from] TedsError),
    #[error("TEDS description {0}")]
    Description(#[from] DescriptionError),
    #[error("ACL update {}: {}", .0.status, .0.detail)]
    AclRejected(AclUpdateResult),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Timeout(_) => exit::TIMEOUT,
            AppError::Auth(_) | AppError::SubscribeDenied(_) => exit::AUTH,
            AppError::Protocol(_) => exit::PROTOCOL,
            AppError::Decode(_) | AppError::Description(_) => exit::DECODE,
            AppError::Remote { .. } => exit::REMOTE_ERROR,
            AppError::AclRejected(_) => exit::ACL_REJECTED,
            AppError::Connect(_) | AppError::Io(_) => exit::FAILURE,
        }
    }
}

impl From<ClientError> for AppError {
    fn from(e: ClientError) -> Self {
        match e {
            e if e.is_auth() => AppError::Auth(e),
            ClientError::Timeout => AppError::Timeout(Duration::ZERO),
            ClientError::Protocol(m) => AppError::Protocol(m),
            other => AppError::Connect(other),
        }
    }
}

#[derive(Debug)]
pub struct PendingRequest {
    pub command: ReadTedsCommand,
    pub deadline: Instant,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("a request to that NCAP is already outstanding")]
pub struct AlreadyPending;

/// Outstanding read-TEDS commands, at most one per `(appId, ncapId)`.
#[derive(Debug, Default)]
pub struct PendingTable {
    by_pair: HashMap<(Uuid1451, Uuid1451), PendingRequest>,
}

impl PendingTable {
    pub fn insert(&mut self, command: ReadTedsCommand, deadline: Instant) -> Result<(), AlreadyPending> {
        let key = (command.app_id, command.ncap_id);
        if self.by_pair.contains_key(&key) {
            return Err(AlreadyPending);
        }
        self.by_pair.insert(key, PendingRequest { command, deadline });
        Ok(())
    }

    /// Removes and returns the request `reply` answers, if any.
    pub fn take_matching(&mut self, reply: &ReadTedsReply) -> Option<PendingRequest> {
        let key = (reply.app_id, reply.ncap_id);
        let hit = self.by_pair.get(&key).is_some_and(|p| correlate(&p.command, reply));
        hit.then(|| self.by_pair.remove(&key)).flatten()
    }

    pub fn expire(&mut self, now: Instant) -> Vec<PendingRequest> {
        let gone: Vec<_> = self.by_pair.iter().filter(|(_, p)| p.deadline <= now).map(|(k, _)| *k).collect();
        gone.into_iter().filter_map(|k| self.by_pair.remove(&k)).collect()
    }

    pub fn len(&self) -> usize {
        self.by_pair.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_pair.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct ReadTedsParams {
    pub app_id: Uuid1451,
    pub ncap_id: Uuid1451,
    pub tim_id: Uuid1451,
    pub channel_id: u16,
    pub access_code: u8,
    pub offset: u32,
    pub timeout: Duration,
}

impl ReadTedsParams {
    pub fn new(app_id: Uuid1451, ncap_id: Uuid1451) -> Self {
        ReadTedsParams {
            app_id,
            ncap_id,
            tim_id: Uuid1451::ZERO,
            channel_id: 0,
            access_code: SECURITY_TEDS_ACCESS_CODE,
            offset: 0,
            timeout: DEFAULT_TIMEOUT,
        }
    }

    pub fn command(&self) -> ReadTedsCommand {
        ReadTedsCommand {
            app_id: self.app_id,
            ncap_id: self.ncap_id,
            tim_id: self.tim_id,
            channel_id: self.channel_id,
            teds_access_code: self.access_code,
            teds_offset: self.offset,
            timeout: TimeDuration::from_duration(self.timeout),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReadTedsOutcome {
    pub reply: ReadTedsReply,
    /// Present when a whole security TEDS was read.
    pub teds: Option<SecurityTeds>,
}

/// Sends one read-TEDS command and waits for its reply.
///
/// The deadline covers the whole exchange, connect included, so the call
/// returns within `timeout` plus scheduling slack.
pub async fn read_teds_flow(opts: ClientOptions, params: &ReadTedsParams) -> Result<ReadTedsOutcome, AppError> {
    let deadline = Instant::now() + params.timeout;
    let timed_out = || AppError::Timeout(params.timeout);
    match tokio::time::timeout_at(deadline, read_teds_inner(opts, params, deadline)).await {
        Ok(Err(AppError::Timeout(_))) | Err(_) => Err(timed_out()),
        Ok(r) => r,
    }
}

async fn read_teds_inner(
    opts: ClientOptions,
    params: &ReadTedsParams,
    deadline: Instant,
) -> Result<ReadTedsOutcome, AppError> {
    let (client, mut inbox) = MqttClient::connect(opts).await?;
    let reply_filter = TopicFilter::from(reply_topic(&params.app_id));
    if client.subscribe(reply_filter.clone(), QoS::AtLeastOnce).await? == SUBACK_FAILURE {
        client.disconnect().await;
        return Err(AppError::SubscribeDenied(reply_filter));
    }
    let command = params.command();
    let mut pending = PendingTable::default();
    pending.insert(command.clone(), deadline).expect("fresh table");
    client.publish(command_topic(&params.ncap_id), encode_command(&command), QoS::AtLeastOnce).await?;

    let reply = loop {
        let Some(msg) = inbox.recv().await else {
            return Err(AppError::Connect(ClientError::Closed));
        };
        match decode_reply(&msg.payload) {
            Ok(reply) if pending.take_matching(&reply).is_some() => break reply,
            Ok(reply) => debug!(event = "uncorrelated_reply", app_id = %reply.app_id, ncap_id = %reply.ncap_id),
            Err(e) => debug!(event = "malformed_reply", error = %e),
        }
    };
    client.disconnect().await;

    if reply.error_code != error_code::SUCCESS {
        return Err(AppError::Remote { code: reply.error_code, reply: Box::new(reply) });
    }
    let teds = if params.access_code == SECURITY_TEDS_ACCESS_CODE && params.offset == 0 {
        Some(decode_security_teds(&reply.raw_teds_block)?)
    } else {
        None
    };
    Ok(ReadTedsOutcome { reply, teds })
}

/// Version label for an entry: TLS versions by name, everything else `V<n>.0`.
pub fn version_label(standard_code: u8, version_code: u8) -> String {
    if standard_code == STANDARD_TLS {
        tls_version_name(version_code).to_owned()
    } else {
        format!("V{version_code}.0")
    }
}

pub fn pretty_print(teds: &SecurityTeds) -> String {
    let mut out = String::new();
    let policies: Vec<_> = teds.level.policies().into_iter().map(|p| p.name()).collect();
    let policies = if policies.is_empty() { "none".to_owned() } else { policies.join(", ") };
    let _ = writeln!(out, "TEDS ID: {}", teds.teds_id);
    let _ = writeln!(out, "Level: {} ({policies})", teds.level);
    let _ = writeln!(out, "Standards: {}", teds.entries.len());
    for e in &teds.entries {
        let _ = writeln!(
            out,
            "  {} ({}) {}",
            standard_name(e.standard_code),
            e.standard_code,
            version_label(e.standard_code, e.version_code)
        );
    }
    for u in &teds.unknown_fields {
        let _ = writeln!(out, "Reserved field {}: {}", u.field_type, hex::encode(&u.value));
    }
    out
}

#[derive(Debug, Clone)]
pub struct AclUpdateParams {
    pub token: String,
    pub op: acs::Op,
    pub user: String,
    pub access: p1451_core::acl::Access,
    pub filter: TopicFilter,
    pub wait: Duration,
}

/// Publishes an ACL update request and waits for the matching result.
/// Any status other than `ok` is returned as [`AppError::AclRejected`].
pub async fn acl_update_flow(opts: ClientOptions, params: &AclUpdateParams) -> Result<AclUpdateResult, AppError> {
    let request = AclUpdateRequest {
        request_id: uuid::Uuid::new_v4().to_string(),
        token: params.token.clone(),
        op: params.op,
        user: params.user.clone(),
        access: params.access,
        filter: params.filter.clone(),
    };
    let (client, mut inbox) = MqttClient::connect(opts).await?;
    let result_filter = TopicFilter::new(acs::RESULT_TOPIC).expect("constant filter");
    if client.subscribe(result_filter.clone(), QoS::AtLeastOnce).await? == SUBACK_FAILURE {
        client.disconnect().await;
        return Err(AppError::SubscribeDenied(result_filter));
    }
    let config_topic = TopicName::new(acs::CONFIG_TOPIC).expect("constant topic");
    client.publish(config_topic, acs::format_request(&request).into_bytes(), QoS::AtLeastOnce).await?;
    let deadline = Instant::now() + params.wait;
    let result = loop {
        let msg = match tokio::time::timeout_at(deadline, inbox.recv()).await {
            Err(_) => {
                client.disconnect().await;
                return Err(AppError::Timeout(params.wait));
            }
            Ok(None) => return Err(AppError::Connect(ClientError::Closed)),
            Ok(Some(m)) => m,
        };
        let parsed = std::str::from_utf8(&msg.payload).ok().and_then(AclUpdateResult::parse);
        if let Some(r) = parsed.filter(|r| r.request_id == request.request_id) {
            break r;
        }
    };
    client.disconnect().await;
    match result.status {
        Status::Ok => Ok(result),
        _ => Err(AppError::AclRejected(result)),
    }
}

/// Reads a textual description and writes the encoded block to `out`.
pub fn encode_teds_file(description: &Path, out: &Path) -> Result<usize, AppError> {
    let teds = parse_description(&std::fs::read_to_string(description)?)?;
    let block = encode_security_teds(&teds)?;
    std::fs::write(out, block.as_bytes())?;
    Ok(block.len())
}

/// Decodes a binary block and returns its printed summary.
pub fn decode_teds_file(input: &Path) -> Result<String, AppError> {
    let bytes = std::fs::read(input)?;
    Ok(pretty_print(&decode_security_teds(&bytes)?))
}

/// Loads a TEDS for serving: either a textual description or, when the file
/// does not parse as text, an already encoded block.
pub fn load_teds(path: &Path) -> Result<SecurityTeds, AppError> {
    let bytes = std::fs::read(path)?;
    match std::str::from_utf8(&bytes) {
        Ok(text) => Ok(parse_description(text)?),
        Err(_) => Ok(decode_security_teds(&bytes)?),
    }
}
