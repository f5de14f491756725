//! MQTT 3.1.1 control-packet subset (protocol level 4).
//!
//! Only what the broker and the P1451.1.6 clients need: CONNECT/CONNACK,
//! PUBLISH at QoS 0 and 1, SUBSCRIBE/UNSUBSCRIBE and their acks, PING and
//! DISCONNECT. QoS 2, will messages and MQTT 5 properties are rejected.

use std::fmt;

use thiserror::Error;

/// Largest value the four-octet remaining-length varint can carry.
pub const MAX_REMAINING_LENGTH: usize = 268_435_455;

const PROTOCOL_NAME: &str = "MQTT";
const PROTOCOL_LEVEL: u8 = 4;

/// SUBACK return code for a refused subscription entry.
pub const SUBACK_FAILURE: u8 = 0x80;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MqttError {
    #[error("incomplete packet, need more data")]
    Incomplete,
    #[error("malformed remaining length")]
    MalformedLength,
    #[error("unknown packet type {0}")]
    UnknownPacketType(u8),
    #[error("QoS 2 is not supported")]
    UnsupportedQos,
    #[error("invalid UTF-8 string")]
    InvalidUtf8,
    #[error("malformed packet: {0}")]
    Malformed(&'static str),
    #[error("unsupported protocol name or level")]
    UnsupportedProtocol,
    #[error("packet exceeds maximum remaining length")]
    PacketTooLarge,
    #[error(transparent)]
    Topic(#[from] TopicError),
}

impl MqttError {
    /// Whether more input may turn this error into a successful decode.
    pub fn is_incomplete(&self) -> bool {
        matches!(self, MqttError::Incomplete)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TopicError {
    #[error("topic is empty")]
    Empty,
    #[error("topic longer than 65535 octets")]
    TooLong,
    #[error("topic contains NUL")]
    Nul,
    #[error("topic name contains a wildcard")]
    WildcardInName,
    #[error("'#' must be the final level")]
    MisplacedMultiLevel,
    #[error("'+' must occupy a whole level")]
    MisplacedSingleLevel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum QoS {
    AtMostOnce = 0,
    AtLeastOnce = 1,
}

impl QoS {
    pub fn from_u8(v: u8) -> Result<QoS, MqttError> {
        match v {
            0 => Ok(QoS::AtMostOnce),
            1 => Ok(QoS::AtLeastOnce),
            2 => Err(MqttError::UnsupportedQos),
            _ => Err(MqttError::Malformed("invalid QoS bits")),
        }
    }
}

fn check_common(s: &str) -> Result<(), TopicError> {
    if s.is_empty() {
        return Err(TopicError::Empty);
    }
    if s.len() > u16::MAX as usize {
        return Err(TopicError::TooLong);
    }
    if s.contains('\0') {
        return Err(TopicError::Nul);
    }
    Ok(())
}

/// A concrete topic a message is published on.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TopicName(String);

impl TopicName {
    pub fn new(s: impl Into<String>) -> Result<Self, TopicError> {
        let s = s.into();
        check_common(&s)?;
        if s.contains(['+', '#']) {
            return Err(TopicError::WildcardInName);
        }
        Ok(TopicName(s))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn levels(&self) -> std::str::Split<'_, char> {
        self.0.split('/')
    }
}

impl fmt::Display for TopicName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A subscription pattern, possibly containing `+` and `#` wildcards.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TopicFilter(String);

impl TopicFilter {
    pub fn new(s: impl Into<String>) -> Result<Self, TopicError> {
        let s = s.into();
        check_common(&s)?;
        let mut levels = s.split('/').peekable();
        while let Some(level) = levels.next() {
            if level.contains('#') && (level != "#" || levels.peek().is_some()) {
                return Err(TopicError::MisplacedMultiLevel);
            }
            if level.contains('+') && level != "+" {
                return Err(TopicError::MisplacedSingleLevel);
            }
        }
        Ok(TopicFilter(s))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn levels(&self) -> std::str::Split<'_, char> {
        self.0.split('/')
    }

    pub fn has_wildcards(&self) -> bool {
        self.0.contains(['+', '#'])
    }

    /// Whether the first level is `+` or `#`.
    pub fn starts_with_wildcard(&self) -> bool {
        self.0.starts_with(['+', '#'])
    }
}

impl fmt::Display for TopicFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<TopicName> for TopicFilter {
    fn from(t: TopicName) -> Self {
        TopicFilter(t.0)
    }
}

/// Validates a subscription filter.
pub fn validate_filter(candidate: &str) -> Result<TopicFilter, TopicError> {
    TopicFilter::new(candidate)
}

/// Level-wise MQTT matching. Filters whose first level is a wildcard never
/// match topics whose first level begins with `$`.
pub fn filter_matches(filter: &TopicFilter, topic: &TopicName) -> bool {
    if filter.starts_with_wildcard() && topic.as_str().starts_with('$') {
        return false;
    }
    let mut topic_levels = topic.levels();
    for f in filter.levels() {
        if f == "#" {
            return true;
        }
        match topic_levels.next() {
            Some(_) if f == "+" => {}
            Some(t) if t == f => {}
            _ => return false,
        }
    }
    topic_levels.next().is_none()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Connect {
    pub client_id: String,
    pub username: Option<String>,
    pub password: Option<Vec<u8>>,
    pub keep_alive: u16,
    pub clean_session: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Publish {
    pub topic: TopicName,
    pub payload: Vec<u8>,
    pub qos: QoS,
    pub packet_id: Option<u16>,
    pub dup: bool,
    pub retain: bool,
}

impl Publish {
    pub fn new(topic: TopicName, payload: impl Into<Vec<u8>>, qos: QoS, packet_id: Option<u16>) -> Self {
        Publish { topic, payload: payload.into(), qos, packet_id, dup: false, retain: false }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Packet {
    Connect(Connect),
    Connack { session_present: bool, return_code: u8 },
    Publish(Publish),
    Puback { packet_id: u16 },
    Subscribe { packet_id: u16, entries: Vec<(TopicFilter, QoS)> },
    Suback { packet_id: u16, return_codes: Vec<u8> },
    Unsubscribe { packet_id: u16, filters: Vec<TopicFilter> },
    Unsuback { packet_id: u16 },
    Pingreq,
    Pingresp,
    Disconnect,
}

/// CONNACK return codes.
pub mod connack {
    pub const ACCEPTED: u8 = 0;
    pub const UNACCEPTABLE_PROTOCOL: u8 = 1;
    pub const IDENTIFIER_REJECTED: u8 = 2;
    pub const SERVER_UNAVAILABLE: u8 = 3;
    pub const BAD_USERNAME_OR_PASSWORD: u8 = 4;
    pub const NOT_AUTHORIZED: u8 = 5;
}

pub fn encode_varint(mut value: usize, out: &mut Vec<u8>) -> Result<(), MqttError> {
    if value > MAX_REMAINING_LENGTH {
        return Err(MqttError::PacketTooLarge);
    }
    loop {
        let mut byte = (value % 128) as u8;
        value /= 128;
        if value > 0 {
            byte |= 0x80;
        }
        out.push(byte);
        if value == 0 {
            return Ok(());
        }
    }
}

/// Returns the decoded value and the number of octets it occupied.
pub fn decode_varint(buf: &[u8]) -> Result<(usize, usize), MqttError> {
    let mut value = 0usize;
    for (i, &byte) in buf.iter().enumerate() {
        if i == 4 {
            return Err(MqttError::MalformedLength);
        }
        value += ((byte & 0x7f) as usize) << (7 * i);
        if byte & 0x80 == 0 {
            return Ok((value, i + 1));
        }
    }
    if buf.len() >= 4 {
        Err(MqttError::MalformedLength)
    } else {
        Err(MqttError::Incomplete)
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) -> Result<(), MqttError> {
    put_bytes(out, s.as_bytes())
}

fn put_bytes(out: &mut Vec<u8>, b: &[u8]) -> Result<(), MqttError> {
    let len = u16::try_from(b.len()).map_err(|_| MqttError::Malformed("string longer than 65535 octets"))?;
    out.extend_from_slice(&len.to_be_bytes());
    out.extend_from_slice(b);
    Ok(())
}

fn packet_id_of(p: &Publish) -> Result<Option<u16>, MqttError> {
    match (p.qos, p.packet_id) {
        (QoS::AtMostOnce, None) => Ok(None),
        (QoS::AtLeastOnce, Some(id)) if id != 0 => Ok(Some(id)),
        (QoS::AtMostOnce, Some(_)) => Err(MqttError::Malformed("QoS 0 publish carries a packet id")),
        _ => Err(MqttError::Malformed("QoS 1 publish needs a non-zero packet id")),
    }
}

pub fn encode_packet(packet: &Packet) -> Result<Vec<u8>, MqttError> {
    let mut body = Vec::new();
    let header: u8 = match packet {
        Packet::Connect(c) => {
            put_str(&mut body, PROTOCOL_NAME)?;
            body.push(PROTOCOL_LEVEL);
            if c.password.is_some() && c.username.is_none() {
                return Err(MqttError::Malformed("password without username"));
            }
            let mut flags = 0u8;
            if c.username.is_some() {
                flags |= 0x80;
            }
            if c.password.is_some() {
                flags |= 0x40;
            }
            if c.clean_session {
                flags |= 0x02;
            }
            body.push(flags);
            body.extend_from_slice(&c.keep_alive.to_be_bytes());
            put_str(&mut body, &c.client_id)?;
            if let Some(u) = &c.username {
                put_str(&mut body, u)?;
            }
            if let Some(p) = &c.password {
                put_bytes(&mut body, p)?;
            }
            0x10
        }
        Packet::Connack { session_present, return_code } => {
            body.push(*session_present as u8);
            body.push(*return_code);
            0x20
        }
        Packet::Publish(p) => {
            let id = packet_id_of(p)?;
            put_str(&mut body, p.topic.as_str())?;
            if let Some(id) = id {
                body.extend_from_slice(&id.to_be_bytes());
            }
            body.extend_from_slice(&p.payload);
            0x30 | ((p.dup as u8) << 3) | ((p.qos as u8) << 1) | p.retain as u8
        }
        Packet::Puback { packet_id } => {
            body.extend_from_slice(&packet_id.to_be_bytes());
            0x40
        }
        Packet::Subscribe { packet_id, entries } => {
            if entries.is_empty() {
                return Err(MqttError::Malformed("SUBSCRIBE without entries"));
            }
            body.extend_from_slice(&packet_id.to_be_bytes());
            for (filter, qos) in entries {
                put_str(&mut body, filter.as_str())?;
                body.push(*qos as u8);
            }
            0x82
        }
        Packet::Suback { packet_id, return_codes } => {
            body.extend_from_slice(&packet_id.to_be_bytes());
            body.extend_from_slice(return_codes);
            0x90
        }
        Packet::Unsubscribe { packet_id, filters } => {
            if filters.is_empty() {
                return Err(MqttError::Malformed("UNSUBSCRIBE without filters"));
            }
            body.extend_from_slice(&packet_id.to_be_bytes());
            for filter in filters {
                put_str(&mut body, filter.as_str())?;
            }
            0xA2
        }
        Packet::Unsuback { packet_id } => {
            body.extend_from_slice(&packet_id.to_be_bytes());
            0xB0
        }
        Packet::Pingreq => 0xC0,
        Packet::Pingresp => 0xD0,
        Packet::Disconnect => 0xE0,
    };
    let mut out = Vec::with_capacity(body.len() + 5);
    out.push(header);
    encode_varint(body.len(), &mut out)?;
    out.extend_from_slice(&body);
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], MqttError> {
        if self.remaining() < n {
            return Err(MqttError::Malformed("field runs past end of packet"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, MqttError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, MqttError> {
        let b = self.take(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn packet_id(&mut self) -> Result<u16, MqttError> {
        match self.u16()? {
            0 => Err(MqttError::Malformed("packet id 0")),
            id => Ok(id),
        }
    }

    fn bytes(&mut self) -> Result<&'a [u8], MqttError> {
        let n = self.u16()? as usize;
        self.take(n)
    }

    fn string(&mut self) -> Result<String, MqttError> {
        let b = self.bytes()?;
        let s = std::str::from_utf8(b).map_err(|_| MqttError::InvalidUtf8)?;
        if s.contains('\0') {
            return Err(MqttError::InvalidUtf8);
        }
        Ok(s.to_owned())
    }

    fn rest(&mut self) -> &'a [u8] {
        let s = &self.buf[self.pos..];
        self.pos = self.buf.len();
        s
    }

    fn finish(&self) -> Result<(), MqttError> {
        if self.remaining() == 0 {
            Ok(())
        } else {
            Err(MqttError::Malformed("trailing octets in packet"))
        }
    }
}

fn expect_flags(header: u8, flags: u8) -> Result<(), MqttError> {
    if header & 0x0f == flags {
        Ok(())
    } else {
        Err(MqttError::Malformed("reserved fixed-header flags"))
    }
}

/// Decodes one packet from the front of `buf`, returning it with the
/// number of octets consumed. Trailing octets are left untouched.
pub fn decode_packet(buf: &[u8]) -> Result<(Packet, usize), MqttError> {
    let header = *buf.first().ok_or(MqttError::Incomplete)?;
    let kind = header >> 4;
    if kind == 0 || kind == 15 {
        return Err(MqttError::UnknownPacketType(kind));
    }
    let (len, len_octets) = decode_varint(&buf[1..])?;
    let start = 1 + len_octets;
    let total = start + len;
    if buf.len() < total {
        return Err(MqttError::Incomplete);
    }
    let mut r = Reader::new(&buf[start..total]);
    let packet = match kind {
        1 => {
            expect_flags(header, 0)?;
            if r.string()? != PROTOCOL_NAME || r.u8()? != PROTOCOL_LEVEL {
                return Err(MqttError::UnsupportedProtocol);
            }
            let flags = r.u8()?;
            if flags & 0x01 != 0 {
                return Err(MqttError::Malformed("reserved connect flag set"));
            }
            if flags & 0x3c != 0 {
                return Err(MqttError::Malformed("will messages are not supported"));
            }
            let has_user = flags & 0x80 != 0;
            let has_pass = flags & 0x40 != 0;
            if has_pass && !has_user {
                return Err(MqttError::Malformed("password flag without username flag"));
            }
            let keep_alive = r.u16()?;
            let client_id = r.string()?;
            let username = if has_user { Some(r.string()?) } else { None };
            let password = if has_pass { Some(r.bytes()?.to_vec()) } else { None };
            r.finish()?;
            Packet::Connect(Connect { client_id, username, password, keep_alive, clean_session: flags & 0x02 != 0 })
        }
        2 => {
            expect_flags(header, 0)?;
            let ack_flags = r.u8()?;
            if ack_flags & 0xfe != 0 {
                return Err(MqttError::Malformed("reserved connack flags"));
            }
            let return_code = r.u8()?;
            r.finish()?;
            Packet::Connack { session_present: ack_flags == 1, return_code }
        }
        3 => {
            let qos = QoS::from_u8((header >> 1) & 0x03)?;
            let dup = header & 0x08 != 0;
            if dup && qos == QoS::AtMostOnce {
                return Err(MqttError::Malformed("DUP set on QoS 0 publish"));
            }
            let topic = TopicName::new(r.string()?)?;
            let packet_id = match qos {
                QoS::AtMostOnce => None,
                QoS::AtLeastOnce => Some(r.packet_id()?),
            };
            let payload = r.rest().to_vec();
            Packet::Publish(Publish { topic, payload, qos, packet_id, dup, retain: header & 0x01 != 0 })
        }
        4 => {
            expect_flags(header, 0)?;
            let packet_id = r.packet_id()?;
            r.finish()?;
            Packet::Puback { packet_id }
        }
        8 => {
            expect_flags(header, 0x02)?;
            let packet_id = r.packet_id()?;
            let mut entries = Vec::new();
            while r.remaining() > 0 {
                let filter = TopicFilter::new(r.string()?)?;
                let options = r.u8()?;
                if options & 0xfc != 0 {
                    return Err(MqttError::Malformed("reserved subscription option bits"));
                }
                entries.push((filter, QoS::from_u8(options)?));
            }
            if entries.is_empty() {
                return Err(MqttError::Malformed("SUBSCRIBE without entries"));
            }
            Packet::Subscribe { packet_id, entries }
        }
        9 => {
            expect_flags(header, 0)?;
            let packet_id = r.packet_id()?;
            let return_codes = r.rest().to_vec();
            Packet::Suback { packet_id, return_codes }
        }
        10 => {
            expect_flags(header, 0x02)?;
            let packet_id = r.packet_id()?;
            let mut filters = Vec::new();
            while r.remaining() > 0 {
                filters.push(TopicFilter::new(r.string()?)?);
            }
            if filters.is_empty() {
                return Err(MqttError::Malformed("UNSUBSCRIBE without filters"));
            }
            Packet::Unsubscribe { packet_id, filters }
        }
        11 => {
            expect_flags(header, 0)?;
            let packet_id = r.packet_id()?;
            r.finish()?;
            Packet::Unsuback { packet_id }
        }
        12..=14 => {
            expect_flags(header, 0)?;
            r.finish()?;
            match kind {
                12 => Packet::Pingreq,
                13 => Packet::Pingresp,
                _ => Packet::Disconnect,
            }
        }
        other => return Err(MqttError::UnknownPacketType(other)),
    };
    Ok((packet, total))
}
