//! Security TEDS codec and the lookup tables that give its codes meaning.
//!
//! Wire layout of a block:
//!
//! ```text
//! Length (u32 BE, counts every following octet including the checksum)
//! TLV*   (type: u8, length: u8, value), ascending type order
//!          3  TEDSID          5 octets
//!          10 Level           1 octet, ASCII letter
//!          11 NumOfStandards  1 octet
//!          12+2i / 13+2i      standard code / version code of entry i
//! Checksum (u16 BE) over Length and all TLVs
//! ```
//!
//! Field types 0-2 and 4-9 are reserved. When present they are carried
//! through untouched in [`SecurityTeds::unknown_fields`].

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

const TYPE_TEDS_ID: u8 = 3;
const TYPE_LEVEL: u8 = 10;
const TYPE_NUM_STANDARDS: u8 = 11;
const TYPE_FIRST_ENTRY: u8 = 12;

/// TEDS access code that selects the security TEDS.
pub const SECURITY_TEDS_ACCESS_CODE: u8 = 16;

/// Entries that fit in the field-type space 12..=255.
pub const MAX_ENTRIES: usize = 122;

/// Standard code of TLS in the security-standard enumeration.
pub const STANDARD_TLS: u8 = 10;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TedsError {
    #[error("block truncated: {0}")]
    Truncated(&'static str),
    #[error("length field says {declared} octets follow, found {actual}")]
    LengthMismatch { declared: u32, actual: usize },
    #[error("checksum mismatch: stored {stored:#06x}, computed {computed:#06x}")]
    ChecksumMismatch { stored: u16, computed: u16 },
    #[error("TEDSID value must be 5 octets, got {0}")]
    BadTedsId(usize),
    #[error("invalid security level octet {0:#04x}")]
    BadLevel(u8),
    #[error("field {field_type} must be 1 octet, got {len}")]
    BadFieldLength { field_type: u8, len: usize },
    #[error("missing required field {0}")]
    MissingField(&'static str),
    #[error("field type {0} out of order or duplicated")]
    FieldOrder(u8),
    #[error("NumOfStandards is {declared} but {present} name/version pairs are present")]
    EntryCountMismatch { declared: u8, present: usize },
    #[error("standard code {0} is in the reserved band 14-127")]
    ReservedStandardCode(u8),
    #[error("too many standards: {0} (max 122)")]
    TooManyEntries(usize),
    #[error("field type {0} is not a reserved slot and cannot be carried as unknown")]
    BadUnknownField(u8),
    #[error("field value longer than 255 octets")]
    ValueTooLong,
}

/// TEDS identification header.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TedsId {
    pub family_major: u8,
    pub family_minor: u8,
    pub access_code: u8,
    pub teds_version: u8,
    pub tuple_length: u8,
}

impl TedsId {
    /// `1 6 16 2 1`: P1451.1.6, security TEDS, TEDS version 2, 1-octet tuple length.
    pub const SECURITY: TedsId = TedsId {
        family_major: 1,
        family_minor: 6,
        access_code: SECURITY_TEDS_ACCESS_CODE,
        teds_version: 2,
        tuple_length: 1,
    };

    pub fn to_bytes(self) -> [u8; 5] {
        [self.family_major, self.family_minor, self.access_code, self.teds_version, self.tuple_length]
    }

    pub fn from_bytes(b: [u8; 5]) -> Self {
        TedsId { family_major: b[0], family_minor: b[1], access_code: b[2], teds_version: b[3], tuple_length: b[4] }
    }
}

impl Default for TedsId {
    fn default() -> Self {
        TedsId::SECURITY
    }
}

impl fmt::Display for TedsId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = self.to_bytes();
        write!(f, "{} {} {} {} {}", b[0], b[1], b[2], b[3], b[4])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Policy {
    Encryption,
    Authentication,
    Authorization,
}

impl Policy {
    pub fn name(self) -> &'static str {
        match self {
            Policy::Encryption => "encryption",
            Policy::Authentication => "authentication",
            Policy::Authorization => "authorization",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SecurityLevel {
    N,
    A,
    B,
    C,
    D,
    E,
}

impl SecurityLevel {
    pub const ALL: [SecurityLevel; 6] =
        [SecurityLevel::N, SecurityLevel::A, SecurityLevel::B, SecurityLevel::C, SecurityLevel::D, SecurityLevel::E];

    pub fn letter(self) -> char {
        match self {
            SecurityLevel::N => 'N',
            SecurityLevel::A => 'A',
            SecurityLevel::B => 'B',
            SecurityLevel::C => 'C',
            SecurityLevel::D => 'D',
            SecurityLevel::E => 'E',
        }
    }

    pub fn from_letter(c: char) -> Option<SecurityLevel> {
        SecurityLevel::ALL.into_iter().find(|l| l.letter() == c.to_ascii_uppercase())
    }

    pub fn to_octet(self) -> u8 {
        self.letter() as u8
    }

    pub fn from_octet(b: u8) -> Option<SecurityLevel> {
        match b {
            b'N' | b'A'..=b'E' => SecurityLevel::from_letter(b as char),
            _ => None,
        }
    }

    pub fn policies(self) -> BTreeSet<Policy> {
        level_policies(self)
    }

    pub fn has(self, policy: Policy) -> bool {
        level_policies(self).contains(&policy)
    }
}

impl fmt::Display for SecurityLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

impl std::str::FromStr for SecurityLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut chars = s.trim().chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => SecurityLevel::from_letter(c).ok_or_else(|| format!("unknown security level {s:?}")),
            _ => Err(format!("unknown security level {s:?}")),
        }
    }
}

/// The policy set each security level combines.
pub fn level_policies(level: SecurityLevel) -> BTreeSet<Policy> {
    use Policy::*;
    let set: &[Policy] = match level {
        SecurityLevel::N => &[],
        SecurityLevel::A => &[Encryption],
        SecurityLevel::B => &[Authentication],
        SecurityLevel::C => &[Encryption, Authentication],
        SecurityLevel::D => &[Authentication, Authorization],
        SecurityLevel::E => &[Encryption, Authentication, Authorization],
    };
    set.iter().copied().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SecurityStandardEntry {
    pub standard_code: u8,
    pub version_code: u8,
}

impl SecurityStandardEntry {
    pub fn new(standard_code: u8, version_code: u8) -> Self {
        SecurityStandardEntry { standard_code, version_code }
    }
}

pub fn is_reserved_standard(code: u8) -> bool {
    (14..=127).contains(&code)
}

/// Display name of a security-standard code. Total over `u8`.
pub fn standard_name(code: u8) -> &'static str {
    match code {
        1 => "NIST CSF",
        2 => "PCI-DSS",
        3 => "FIPS-140-2",
        4 => "NSA Suite B",
        5 => "ChaCha20",
        6 => "AES",
        7 => "ISO 29192",
        8 => "LDAP",
        9 => "OAuth",
        10 => "TLS",
        11 => "VPN",
        12 => "Username/Password",
        13 => "Client Identifier",
        14..=127 => "Reserved",
        128 => "MQTT-ACL",
        129..=255 => "User-defined",
        0 => "Unassigned",
    }
}

/// Display name of a TLS version code.
pub fn tls_version_name(code: u8) -> &'static str {
    match code {
        0 => "Default",
        1 => "TLS 1.0",
        2 => "TLS 1.1",
        3 => "TLS 1.2",
        4 => "TLS 1.3",
        _ => "Manufacturer-defined",
    }
}

/// A field from a reserved slot (types 0-2, 4-9), kept verbatim.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct UnknownField {
    pub field_type: u8,
    pub value: Vec<u8>,
}

fn is_unknown_slot(t: u8) -> bool {
    t < TYPE_TEDS_ID || (TYPE_TEDS_ID < t && t < TYPE_LEVEL)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SecurityTeds {
    pub teds_id: TedsId,
    pub level: SecurityLevel,
    pub entries: Vec<SecurityStandardEntry>,
    pub unknown_fields: Vec<UnknownField>,
}

impl SecurityTeds {
    pub fn new(level: SecurityLevel, entries: Vec<SecurityStandardEntry>) -> Self {
        SecurityTeds { teds_id: TedsId::SECURITY, level, entries, unknown_fields: Vec::new() }
    }
}

/// Security TEDS block exactly as carried on the wire.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RawTedsBlock(Vec<u8>);

impl RawTedsBlock {
    pub fn from_bytes(b: impl Into<Vec<u8>>) -> Self {
        RawTedsBlock(b.into())
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl AsRef<[u8]> for RawTedsBlock {
    fn as_ref(&self) -> &[u8] {
        &self.0
    }
}

/// `0xFFFF - (sum of octets mod 0x10000)`.
pub fn compute_checksum(octets: &[u8]) -> u16 {
    let sum = octets.iter().fold(0u16, |acc, &b| acc.wrapping_add(b as u16));
    0xFFFF - sum
}

fn push_tlv(out: &mut Vec<u8>, field_type: u8, value: &[u8]) -> Result<(), TedsError> {
    let len = u8::try_from(value.len()).map_err(|_| TedsError::ValueTooLong)?;
    out.push(field_type);
    out.push(len);
    out.extend_from_slice(value);
    Ok(())
}

pub fn encode_security_teds(teds: &SecurityTeds) -> Result<RawTedsBlock, TedsError> {
    if teds.entries.len() > MAX_ENTRIES {
        return Err(TedsError::TooManyEntries(teds.entries.len()));
    }
    if let Some(e) = teds.entries.iter().find(|e| is_reserved_standard(e.standard_code)) {
        return Err(TedsError::ReservedStandardCode(e.standard_code));
    }
    let mut unknown: Vec<&UnknownField> = teds.unknown_fields.iter().collect();
    unknown.sort_by_key(|f| f.field_type);
    for pair in unknown.windows(2) {
        if pair[0].field_type == pair[1].field_type {
            return Err(TedsError::FieldOrder(pair[0].field_type));
        }
    }
    if let Some(f) = unknown.iter().find(|f| !is_unknown_slot(f.field_type)) {
        return Err(TedsError::BadUnknownField(f.field_type));
    }

    let mut out = vec![0u8; 4];
    let mut unknown = unknown.into_iter().peekable();
    let mut flush_unknown_below = |out: &mut Vec<u8>, limit: u8| -> Result<(), TedsError> {
        while let Some(f) = unknown.next_if(|f| f.field_type < limit) {
            push_tlv(out, f.field_type, &f.value)?;
        }
        Ok(())
    };
    flush_unknown_below(&mut out, TYPE_TEDS_ID)?;
    push_tlv(&mut out, TYPE_TEDS_ID, &teds.teds_id.to_bytes())?;
    flush_unknown_below(&mut out, TYPE_LEVEL)?;
    push_tlv(&mut out, TYPE_LEVEL, &[teds.level.to_octet()])?;
    push_tlv(&mut out, TYPE_NUM_STANDARDS, &[teds.entries.len() as u8])?;
    for (i, e) in teds.entries.iter().enumerate() {
        let t = TYPE_FIRST_ENTRY + 2 * i as u8;
        push_tlv(&mut out, t, &[e.standard_code])?;
        push_tlv(&mut out, t + 1, &[e.version_code])?;
    }
    let length = (out.len() - 4 + 2) as u32;
    out[..4].copy_from_slice(&length.to_be_bytes());
    let checksum = compute_checksum(&out);
    out.extend_from_slice(&checksum.to_be_bytes());
    Ok(RawTedsBlock(out))
}

fn single_octet(field_type: u8, value: &[u8]) -> Result<u8, TedsError> {
    match value {
        [b] => Ok(*b),
        _ => Err(TedsError::BadFieldLength { field_type, len: value.len() }),
    }
}

/// Decodes a block, accepting only the canonical layout produced by
/// [`encode_security_teds`], so that every successfully decoded block
/// re-encodes to the same octets.
pub fn decode_security_teds(block: &[u8]) -> Result<SecurityTeds, TedsError> {
    if block.len() < 4 {
        return Err(TedsError::Truncated("length field"));
    }
    let declared = u32::from_be_bytes([block[0], block[1], block[2], block[3]]);
    let actual = block.len() - 4;
    if declared as usize != actual {
        return Err(TedsError::LengthMismatch { declared, actual });
    }
    if actual < 2 {
        return Err(TedsError::Truncated("checksum"));
    }
    let (covered, trailer) = block.split_at(block.len() - 2);
    let stored = u16::from_be_bytes([trailer[0], trailer[1]]);
    let computed = compute_checksum(covered);
    if stored != computed {
        return Err(TedsError::ChecksumMismatch { stored, computed });
    }

    let mut body = &covered[4..];
    let mut teds_id = None;
    let mut level = None;
    let mut declared_entries = None;
    let mut entry_octets: Vec<u8> = Vec::new();
    let mut unknown_fields = Vec::new();
    let mut last_type: Option<u8> = None;

    while !body.is_empty() {
        if body.len() < 2 {
            return Err(TedsError::Truncated("TLV header"));
        }
        let (field_type, len) = (body[0], body[1] as usize);
        if body.len() < 2 + len {
            return Err(TedsError::Truncated("TLV value"));
        }
        let value = &body[2..2 + len];
        body = &body[2 + len..];
        if last_type.is_some_and(|t| field_type <= t) {
            return Err(TedsError::FieldOrder(field_type));
        }
        last_type = Some(field_type);

        match field_type {
            TYPE_TEDS_ID => {
                let id: [u8; 5] = value.try_into().map_err(|_| TedsError::BadTedsId(len))?;
                teds_id = Some(TedsId::from_bytes(id));
            }
            TYPE_LEVEL => {
                let b = single_octet(field_type, value)?;
                level = Some(SecurityLevel::from_octet(b).ok_or(TedsError::BadLevel(b))?);
            }
            TYPE_NUM_STANDARDS => declared_entries = Some(single_octet(field_type, value)?),
            t if is_unknown_slot(t) => unknown_fields.push(UnknownField { field_type: t, value: value.to_vec() }),
            t => {
                // Contiguity is guaranteed by strictly ascending types plus
                // the count check against NumOfStandards below.
                if t != TYPE_FIRST_ENTRY + entry_octets.len() as u8 {
                    return Err(TedsError::FieldOrder(t));
                }
                entry_octets.push(single_octet(t, value)?);
            }
        }
    }

    let teds_id = teds_id.ok_or(TedsError::MissingField("TEDSID"))?;
    let level = level.ok_or(TedsError::MissingField("Level"))?;
    let declared_entries = declared_entries.ok_or(TedsError::MissingField("NumOfStandards"))?;
    if !entry_octets.len().is_multiple_of(2) || entry_octets.len() / 2 != declared_entries as usize {
        return Err(TedsError::EntryCountMismatch { declared: declared_entries, present: entry_octets.len() / 2 });
    }
    let entries: Vec<_> = entry_octets.chunks_exact(2).map(|p| SecurityStandardEntry::new(p[0], p[1])).collect();
    if let Some(e) = entries.iter().find(|e| is_reserved_standard(e.standard_code)) {
        return Err(TedsError::ReservedStandardCode(e.standard_code));
    }
    Ok(SecurityTeds { teds_id, level, entries, unknown_fields })
}

/// The security TEDS of the P1451.1.6 use case: level E with TLS 1.3,
/// username/password v1.0 and MQTT-ACL v1.0.
pub fn example_security_teds() -> SecurityTeds {
    SecurityTeds::new(
        SecurityLevel::E,
        vec![
            SecurityStandardEntry::new(STANDARD_TLS, 4),
            SecurityStandardEntry::new(12, 1),
            SecurityStandardEntry::new(128, 1),
        ],
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct DescriptionError {
    pub line: usize,
    pub message: String,
}

/// Parses the textual TEDS description used by the tooling:
///
/// ```text
/// # comment
/// level=E
/// standard=10,4
/// standard=12,1
/// ```
///
/// An optional `teds_id=1 6 16 2 1` line overrides the identification header.
pub fn parse_description(text: &str) -> Result<SecurityTeds, DescriptionError> {
    let mut level = None;
    let mut teds_id = TedsId::SECURITY;
    let mut entries = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let err = |message: String| DescriptionError { line: line_no, message };
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| err(format!("expected key=value, got {line:?}")))?;
        let value = value.trim();
        match key.trim() {
            "level" => {
                if level.is_some() {
                    return Err(err("duplicate level".into()));
                }
                level = Some(value.parse::<SecurityLevel>().map_err(err)?);
            }
            "standard" => {
                let (code, version) =
                    value.split_once(',').ok_or_else(|| err("expected standard=<code>,<version>".into()))?;
                let code: u8 = code.trim().parse().map_err(|_| err(format!("bad standard code {code:?}")))?;
                let version: u8 = version.trim().parse().map_err(|_| err(format!("bad version code {version:?}")))?;
                if is_reserved_standard(code) {
                    return Err(err(format!("standard code {code} is reserved")));
                }
                entries.push(SecurityStandardEntry::new(code, version));
            }
            "teds_id" => {
                let parts: Vec<u8> = value
                    .split_whitespace()
                    .map(|p| p.parse::<u8>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| err(format!("bad teds_id {value:?}")))?;
                let id: [u8; 5] = parts.try_into().map_err(|_| err("teds_id needs 5 octets".into()))?;
                teds_id = TedsId::from_bytes(id);
            }
            other => return Err(err(format!("unknown key {other:?}"))),
        }
    }
    if entries.len() > MAX_ENTRIES {
        return Err(DescriptionError { line: 0, message: format!("too many standards ({})", entries.len()) });
    }
    let level = level.ok_or_else(|| DescriptionError { line: 0, message: "missing level".into() })?;
    Ok(SecurityTeds { teds_id, level, entries, unknown_fields: Vec::new() })
}

/// Inverse of [`parse_description`] for documents without unknown fields.
pub fn format_description(teds: &SecurityTeds) -> String {
    let mut out = String::new();
    if teds.teds_id != TedsId::SECURITY {
        out.push_str(&format!("teds_id={}\n", teds.teds_id));
    }
    out.push_str(&format!("level={}\n", teds.level));
    for e in &teds.entries {
        out.push_str(&format!("standard={},{}\n", e.standard_code, e.version_code));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    // Frozen from an independent summation script over the field layout.
    const GOLDEN: &str = "00000021030501061002010a01450b01030c010a0d01040e010c0f0101100180110101fe64";

    fn golden() -> Vec<u8> {
        hex::decode(GOLDEN).unwrap()
    }

    #[test]
    fn example_encodes_to_golden_block() {
        let block = encode_security_teds(&example_security_teds()).unwrap();
        assert_eq!(block.as_bytes(), golden().as_slice());
        assert_eq!(&block.as_bytes()[..4], &[0, 0, 0, 0x21]);
        assert_eq!(decode_security_teds(block.as_bytes()).unwrap(), example_security_teds());
    }

    #[test]
    fn level_n_without_entries() {
        let block = encode_security_teds(&SecurityTeds::new(SecurityLevel::N, vec![])).unwrap();
        assert_eq!(hex::encode(block.as_bytes()), "0000000f030501061002010a014e0b0100ff69");
    }

    #[test]
    fn reserved_standard_code_rejected() {
        let t = SecurityTeds::new(SecurityLevel::B, vec![SecurityStandardEntry::new(50, 1)]);
        assert_eq!(encode_security_teds(&t), Err(TedsError::ReservedStandardCode(50)));
    }

    #[test]
    fn entry_limit() {
        let e = SecurityStandardEntry::new(12, 1);
        let t = SecurityTeds::new(SecurityLevel::B, vec![e; MAX_ENTRIES]);
        let block = encode_security_teds(&t).unwrap();
        assert_eq!(decode_security_teds(block.as_bytes()).unwrap(), t);
        let t = SecurityTeds::new(SecurityLevel::B, vec![e; MAX_ENTRIES + 1]);
        assert_eq!(encode_security_teds(&t), Err(TedsError::TooManyEntries(123)));
    }

    #[test]
    fn checksum_values() {
        assert_eq!(compute_checksum(&[]), 0xFFFF);
        assert_eq!(compute_checksum(&[0x01]), 0xFFFE);
        let g = golden();
        assert_eq!(compute_checksum(&g[..g.len() - 2]), 0xFE64);
    }

    #[test]
    fn flipped_last_octet_fails_checksum() {
        let mut g = golden();
        *g.last_mut().unwrap() ^= 0x01;
        assert!(matches!(decode_security_teds(&g), Err(TedsError::ChecksumMismatch { .. })));
    }

    #[test]
    fn empty_and_short_blocks_are_truncated() {
        assert_eq!(decode_security_teds(&[]), Err(TedsError::Truncated("length field")));
        assert_eq!(decode_security_teds(&[0, 0, 0, 1, 0]), Err(TedsError::Truncated("checksum")));
        let g = golden();
        assert!(matches!(decode_security_teds(&g[..g.len() - 1]), Err(TedsError::LengthMismatch { .. })));
    }

    fn seal(mut body: Vec<u8>) -> Vec<u8> {
        let mut out = ((body.len() + 2) as u32).to_be_bytes().to_vec();
        out.append(&mut body);
        let c = compute_checksum(&out);
        out.extend_from_slice(&c.to_be_bytes());
        out
    }

    #[test]
    fn structural_errors() {
        let id = [3, 5, 1, 6, 16, 2, 1];
        let mut b = vec![3, 4, 1, 6, 16, 2];
        b.extend_from_slice(&[10, 1, b'E', 11, 1, 0]);
        assert_eq!(decode_security_teds(&seal(b)), Err(TedsError::BadTedsId(4)));

        let mut b = id.to_vec();
        b.extend_from_slice(&[10, 1, b'F', 11, 1, 0]);
        assert_eq!(decode_security_teds(&seal(b)), Err(TedsError::BadLevel(b'F')));

        let mut b = id.to_vec();
        b.extend_from_slice(&[10, 1, b'E', 11, 1, 2, 12, 1, 10, 13, 1, 4]);
        assert!(matches!(decode_security_teds(&seal(b)), Err(TedsError::EntryCountMismatch { declared: 2, .. })));

        let mut b = id.to_vec();
        b.extend_from_slice(&[10, 1, b'E', 11, 1, 0, 12, 1, 10]);
        assert!(matches!(decode_security_teds(&seal(b)), Err(TedsError::EntryCountMismatch { .. })));

        let mut b = id.to_vec();
        b.extend_from_slice(&[10, 1, b'E', 11, 1]);
        assert_eq!(decode_security_teds(&seal(b)), Err(TedsError::Truncated("TLV value")));

        let mut b = vec![10, 1, b'E'];
        b.extend_from_slice(&id);
        assert_eq!(decode_security_teds(&seal(b)), Err(TedsError::FieldOrder(3)));

        let b = vec![10, 1, b'E', 11, 1, 0];
        assert_eq!(decode_security_teds(&seal(b)), Err(TedsError::MissingField("TEDSID")));

        let mut b = id.to_vec();
        b.extend_from_slice(&[10, 1, b'E', 11, 1, 1, 12, 1, 50, 13, 1, 1]);
        assert_eq!(decode_security_teds(&seal(b)), Err(TedsError::ReservedStandardCode(50)));
    }

    #[test]
    fn reserved_slots_survive_round_trip() {
        let mut b = vec![1, 2, 0xAA, 0xBB, 3, 5, 1, 6, 16, 2, 1, 7, 0];
        b.extend_from_slice(&[10, 1, b'C', 11, 1, 1, 12, 1, 10, 13, 1, 3]);
        let block = seal(b);
        let t = decode_security_teds(&block).unwrap();
        assert_eq!(t.unknown_fields.len(), 2);
        assert_eq!(encode_security_teds(&t).unwrap().as_bytes(), block.as_slice());
    }

    #[test]
    fn name_tables() {
        assert_eq!(standard_name(10), "TLS");
        assert_eq!(standard_name(128), "MQTT-ACL");
        assert_eq!(standard_name(14), "Reserved");
        assert_eq!(standard_name(127), "Reserved");
        assert_eq!(standard_name(200), "User-defined");
        assert_eq!(standard_name(12), "Username/Password");
        assert_eq!(tls_version_name(4), "TLS 1.3");
        assert_eq!(tls_version_name(0), "Default");
        assert_eq!(tls_version_name(7), "Manufacturer-defined");
    }

    #[test]
    fn level_policy_sets() {
        use Policy::*;
        assert_eq!(level_policies(SecurityLevel::E), [Encryption, Authentication, Authorization].into());
        assert!(level_policies(SecurityLevel::N).is_empty());
        assert_eq!(level_policies(SecurityLevel::C), [Encryption, Authentication].into());
        let distinct: std::collections::HashSet<_> = SecurityLevel::ALL.iter().map(|l| level_policies(*l)).collect();
        assert_eq!(distinct.len(), 6);
    }

    #[test]
    fn level_octets() {
        assert_eq!(SecurityLevel::E.to_octet(), 0x45);
        assert_eq!(SecurityLevel::N.to_octet(), 0x4E);
        for l in SecurityLevel::ALL {
            assert_eq!(SecurityLevel::from_octet(l.to_octet()), Some(l));
        }
        assert_eq!(SecurityLevel::from_octet(b'e'), None);
    }

    #[test]
    fn description_round_trip() {
        let text = "# golden\nlevel=E\nstandard=10,4\nstandard=12,1\nstandard=128,1\n";
        let t = parse_description(text).unwrap();
        assert_eq!(t, example_security_teds());
        assert_eq!(parse_description(&format_description(&t)).unwrap(), t);
    }

    #[test]
    fn description_errors_carry_line_numbers() {
        let e = parse_description("level=E\nstandard=10\n").unwrap_err();
        assert_eq!(e.line, 2);
        let e = parse_description("level=E\n\nstandard=50,1\n").unwrap_err();
        assert_eq!(e.line, 3);
        assert_eq!(parse_description("standard=10,4\n").unwrap_err().line, 0);
        assert_eq!(parse_description("level=Q\n").unwrap_err().line, 1);
    }
}
