//! P1451.0 read-TEDS network-service messages and their MQTT topics.
//!
//! Every message is a 5-octet header (`netSvcType`, `netSvcId`, `msgType`,
//! `msgLength` as u16) followed by the body. All integers are big-endian.

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use thiserror::Error;

use crate::mqtt::TopicName;

pub const NET_SVC_TYPE_TEDS: u8 = 3;
pub const NET_SVC_ID_READ_TEDS: u8 = 2;
pub const MSG_TYPE_COMMAND: u8 = 1;
pub const MSG_TYPE_REPLY: u8 = 2;

pub const HEADER_LEN: usize = 5;
/// Body size of a read-TEDS command.
pub const COMMAND_BODY_LEN: usize = 16 * 3 + 2 + 1 + 4 + 8;
/// Fixed part of a read-TEDS reply body, before the raw TEDS block.
pub const REPLY_PREFIX_LEN: usize = 2 + 16 * 3 + 2 + 4;

pub const TOPIC_ROOT: &str = "1451.1.6";

/// Reply error codes. Only 0 is fixed by P1451.0; the rest are local.
pub mod error_code {
    pub const SUCCESS: u16 = 0;
    pub const UNSUPPORTED_SERVICE: u16 = 1;
    pub const UNKNOWN_TIM_OR_CHANNEL: u16 = 2;
    pub const TEDS_NOT_FOUND: u16 = 3;
    pub const INVALID_OFFSET: u16 = 4;
    pub const INTERNAL: u16 = 5;
    pub const ACCESS_DENIED: u16 = 6;

    pub fn describe(code: u16) -> &'static str {
        match code {
            SUCCESS => "success",
            UNSUPPORTED_SERVICE => "unsupported service",
            UNKNOWN_TIM_OR_CHANNEL => "unknown TIM or channel",
            TEDS_NOT_FOUND => "TEDS not found for access code",
            INVALID_OFFSET => "invalid TEDS offset",
            INTERNAL => "internal error",
            ACCESS_DENIED => "access denied",
            _ => "unknown error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NetSvcError {
    #[error("message truncated")]
    Truncated,
    #[error("unexpected header {net_svc_type}/{net_svc_id}, expected read-TEDS service 3/2")]
    WrongService { net_svc_type: u8, net_svc_id: u8 },
    #[error("not a command (msgType {0})")]
    NotACommand(u8),
    #[error("not a reply (msgType {0})")]
    NotAReply(u8),
    #[error("msgLength {declared} does not match body length {actual}")]
    LengthMismatch { declared: u16, actual: usize },
    #[error("command msgLength must be 63, got {0}")]
    BadCommandLength(u16),
    #[error("invalid time duration: {0} nanoseconds")]
    BadDuration(u32),
    #[error("raw TEDS block too long for one message")]
    TooLong,
    #[error("invalid UUID {0:?}")]
    BadUuid(String),
}

/// Opaque 16-octet P1451 identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Uuid1451(pub [u8; 16]);

impl Uuid1451 {
    pub const ZERO: Uuid1451 = Uuid1451([0; 16]);

    pub fn is_zero(&self) -> bool {
        self.0 == [0; 16]
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Display for Uuid1451 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl FromStr for Uuid1451 {
    type Err = NetSvcError;

    /// Accepts 32 hex digits, optionally hyphenated as in canonical UUIDs.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let digits: String = s.chars().filter(|c| *c != '-').collect();
        let mut out = [0u8; 16];
        hex::decode_to_slice(&digits, &mut out).map_err(|_| NetSvcError::BadUuid(s.to_owned()))?;
        Ok(Uuid1451(out))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct TimeDuration {
    pub seconds: u32,
    pub nanoseconds: u32,
}

impl TimeDuration {
    pub fn new(seconds: u32, nanoseconds: u32) -> Result<Self, NetSvcError> {
        if nanoseconds >= 1_000_000_000 {
            return Err(NetSvcError::BadDuration(nanoseconds));
        }
        Ok(TimeDuration { seconds, nanoseconds })
    }

    pub fn from_secs(seconds: u32) -> Self {
        TimeDuration { seconds, nanoseconds: 0 }
    }

    /// Saturates at `u32::MAX` seconds.
    pub fn from_duration(d: Duration) -> Self {
        TimeDuration { seconds: d.as_secs().min(u32::MAX as u64) as u32, nanoseconds: d.subsec_nanos() }
    }

    pub fn as_duration(&self) -> Duration {
        Duration::new(self.seconds as u64, self.nanoseconds)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReadTedsCommand {
    pub app_id: Uuid1451,
    pub ncap_id: Uuid1451,
    pub tim_id: Uuid1451,
    pub channel_id: u16,
    pub teds_access_code: u8,
    pub teds_offset: u32,
    pub timeout: TimeDuration,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReadTedsReply {
    pub error_code: u16,
    pub app_id: Uuid1451,
    pub ncap_id: Uuid1451,
    pub tim_id: Uuid1451,
    pub channel_id: u16,
    pub teds_offset: u32,
    pub raw_teds_block: Vec<u8>,
}

impl ReadTedsReply {
    /// An error reply echoing the command's identifiers, with an empty block.
    pub fn error_for(cmd: &ReadTedsCommand, error_code: u16) -> Self {
        ReadTedsReply {
            error_code,
            app_id: cmd.app_id,
            ncap_id: cmd.ncap_id,
            tim_id: cmd.tim_id,
            channel_id: cmd.channel_id,
            teds_offset: cmd.teds_offset,
            raw_teds_block: Vec::new(),
        }
    }
}

fn header(msg_type: u8, body_len: usize) -> Result<Vec<u8>, NetSvcError> {
    let len = u16::try_from(body_len).map_err(|_| NetSvcError::TooLong)?;
    let mut out = Vec::with_capacity(HEADER_LEN + body_len);
    out.extend_from_slice(&[NET_SVC_TYPE_TEDS, NET_SVC_ID_READ_TEDS, msg_type]);
    out.extend_from_slice(&len.to_be_bytes());
    Ok(out)
}

/// Validates the header and returns the body slice.
fn split_header(buf: &[u8], expect_type: u8) -> Result<&[u8], NetSvcError> {
    if buf.len() < HEADER_LEN {
        return Err(NetSvcError::Truncated);
    }
    let (net_svc_type, net_svc_id, msg_type) = (buf[0], buf[1], buf[2]);
    if net_svc_type != NET_SVC_TYPE_TEDS || net_svc_id != NET_SVC_ID_READ_TEDS {
        return Err(NetSvcError::WrongService { net_svc_type, net_svc_id });
    }
    if msg_type != expect_type {
        return Err(if expect_type == MSG_TYPE_COMMAND {
            NetSvcError::NotACommand(msg_type)
        } else {
            NetSvcError::NotAReply(msg_type)
        });
    }
    let declared = u16::from_be_bytes([buf[3], buf[4]]);
    let body = &buf[HEADER_LEN..];
    if body.len() < declared as usize {
        return Err(NetSvcError::Truncated);
    }
    if body.len() != declared as usize {
        return Err(NetSvcError::LengthMismatch { declared, actual: body.len() });
    }
    Ok(body)
}

struct Cursor<'a>(&'a [u8]);

impl<'a> Cursor<'a> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], NetSvcError> {
        if self.0.len() < N {
            return Err(NetSvcError::Truncated);
        }
        let (head, tail) = self.0.split_at(N);
        self.0 = tail;
        Ok(head.try_into().expect("length checked"))
    }

    fn uuid(&mut self) -> Result<Uuid1451, NetSvcError> {
        self.take::<16>().map(Uuid1451)
    }

    fn u16(&mut self) -> Result<u16, NetSvcError> {
        self.take::<2>().map(u16::from_be_bytes)
    }

    fn u32(&mut self) -> Result<u32, NetSvcError> {
        self.take::<4>().map(u32::from_be_bytes)
    }
}

pub fn encode_command(cmd: &ReadTedsCommand) -> Vec<u8> {
    let mut out = header(MSG_TYPE_COMMAND, COMMAND_BODY_LEN).expect("command body is fixed size");
    out.extend_from_slice(&cmd.app_id.0);
    out.extend_from_slice(&cmd.ncap_id.0);
    out.extend_from_slice(&cmd.tim_id.0);
    out.extend_from_slice(&cmd.channel_id.to_be_bytes());
    out.push(cmd.teds_access_code);
    out.extend_from_slice(&cmd.teds_offset.to_be_bytes());
    out.extend_from_slice(&cmd.timeout.seconds.to_be_bytes());
    out.extend_from_slice(&cmd.timeout.nanoseconds.to_be_bytes());
    out
}

pub fn decode_command(buf: &[u8]) -> Result<ReadTedsCommand, NetSvcError> {
    let body = split_header(buf, MSG_TYPE_COMMAND)?;
    if body.len() != COMMAND_BODY_LEN {
        return Err(NetSvcError::BadCommandLength(body.len() as u16));
    }
    let mut c = Cursor(body);
    let app_id = c.uuid()?;
    let ncap_id = c.uuid()?;
    let tim_id = c.uuid()?;
    let channel_id = c.u16()?;
    let [teds_access_code] = c.take::<1>()?;
    let teds_offset = c.u32()?;
    let seconds = c.u32()?;
    let timeout = TimeDuration::new(seconds, c.u32()?)?;
    Ok(ReadTedsCommand { app_id, ncap_id, tim_id, channel_id, teds_access_code, teds_offset, timeout })
}

pub fn encode_reply(rep: &ReadTedsReply) -> Result<Vec<u8>, NetSvcError> {
    let mut out = header(MSG_TYPE_REPLY, REPLY_PREFIX_LEN + rep.raw_teds_block.len())?;
    out.extend_from_slice(&rep.error_code.to_be_bytes());
    out.extend_from_slice(&rep.app_id.0);
    out.extend_from_slice(&rep.ncap_id.0);
    out.extend_from_slice(&rep.tim_id.0);
    out.extend_from_slice(&rep.channel_id.to_be_bytes());
    out.extend_from_slice(&rep.teds_offset.to_be_bytes());
    out.extend_from_slice(&rep.raw_teds_block);
    Ok(out)
}

pub fn decode_reply(buf: &[u8]) -> Result<ReadTedsReply, NetSvcError> {
    let body = split_header(buf, MSG_TYPE_REPLY)?;
    if body.len() < REPLY_PREFIX_LEN {
        return Err(NetSvcError::Truncated);
    }
    let mut c = Cursor(body);
    Ok(ReadTedsReply {
        error_code: c.u16()?,
        app_id: c.uuid()?,
        ncap_id: c.uuid()?,
        tim_id: c.uuid()?,
        channel_id: c.u16()?,
        teds_offset: c.u32()?,
        raw_teds_block: c.0.to_vec(),
    })
}

/// Topic an NCAP listens on for commands.
pub fn command_topic(ncap_id: &Uuid1451) -> TopicName {
    TopicName::new(format!("{TOPIC_ROOT}/cmd/{ncap_id}")).expect("hex topic is valid")
}

/// Topic an APP listens on for replies.
pub fn reply_topic(app_id: &Uuid1451) -> TopicName {
    TopicName::new(format!("{TOPIC_ROOT}/reply/{app_id}")).expect("hex topic is valid")
}

/// Recovers the id from a topic built by [`command_topic`] or [`reply_topic`].
pub fn id_from_topic(topic: &TopicName) -> Option<Uuid1451> {
    let rest = topic.as_str().strip_prefix(TOPIC_ROOT)?.strip_prefix('/')?;
    let (kind, hex) = rest.split_once('/')?;
    if !matches!(kind, "cmd" | "reply") || hex.len() != 32 || hex.bytes().any(|b| b.is_ascii_uppercase()) {
        return None;
    }
    hex.parse().ok()
}

/// A reply belongs to a command when it echoes both the APP and NCAP ids.
pub fn correlate(cmd: &ReadTedsCommand, rep: &ReadTedsReply) -> bool {
    rep.app_id == cmd.app_id && rep.ncap_id == cmd.ncap_id
}
