//! Property suites returning how many cases they checked, or the first
//! counterexample as text.

use p1451_core::acl::filter_covers;
use p1451_core::mqtt::{decode_packet, decode_varint, encode_packet, encode_varint, filter_matches};
use p1451_core::netsvc::{decode_command, decode_reply, encode_command, encode_reply};
use p1451_core::teds::{decode_security_teds, encode_security_teds};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

use crate::{oracles, strategies};

pub type SuiteResult = Result<usize, String>;

fn run<S: Strategy>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> SuiteResult {
    let mut runner = TestRunner::new(Config { cases, failure_persistence: None, ..Config::default() });
    runner.run(&strategy, test).map(|_| cases as usize).map_err(|e| e.to_string())
}

pub fn teds_round_trip(cases: u32) -> SuiteResult {
    run(cases, strategies::security_teds(), |t| {
        let block = encode_security_teds(&t).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let entries: Vec<(u8, u8)> = t.entries.iter().map(|e| (e.standard_code, e.version_code)).collect();
        let expected = oracles::security_teds_block(t.teds_id.to_bytes(), t.level.letter(), &entries);
        prop_assert_eq!(block.as_bytes(), expected.as_slice());
        prop_assert_eq!(decode_security_teds(block.as_bytes()).map_err(|e| TestCaseError::fail(e.to_string()))?, t);
        Ok(())
    })
}

/// Every single-octet substitution of the golden block must be rejected.
pub fn teds_golden_corruption() -> SuiteResult {
    let golden = crate::golden_block();
    decode_security_teds(&golden).map_err(|e| format!("golden block rejected: {e}"))?;
    let mut checked = 0;
    for pos in 0..golden.len() {
        for value in (0..=255u8).filter(|v| *v != golden[pos]) {
            let mut corrupt = golden.clone();
            corrupt[pos] = value;
            if decode_security_teds(&corrupt).is_ok() {
                return Err(format!("corruption at octet {pos} to {value:#04x} accepted"));
            }
            checked += 1;
        }
    }
    Ok(checked)
}

pub fn mqtt_round_trip(cases: u32) -> SuiteResult {
    run(cases, strategies::packet(), |p| {
        let bytes = encode_packet(&p).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let (decoded, used) = decode_packet(&bytes).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert_eq!(used, bytes.len());
        prop_assert_eq!(decoded, p);
        Ok(())
    })
}

pub const VARINT_BOUNDARIES: [usize; 8] = [0, 127, 128, 16_383, 16_384, 2_097_151, 2_097_152, 268_435_455];

pub fn varint_boundaries() -> SuiteResult {
    for v in VARINT_BOUNDARIES {
        let mut out = Vec::new();
        encode_varint(v, &mut out).map_err(|e| format!("{v}: {e}"))?;
        if out != oracles::varint(v) {
            return Err(format!("{v}: encoded {out:02x?}, oracle {:02x?}", oracles::varint(v)));
        }
        if decode_varint(&out).map_err(|e| format!("{v}: {e}"))? != (v, out.len()) {
            return Err(format!("{v}: decode mismatch"));
        }
    }
    let mut out = Vec::new();
    if encode_varint(268_435_456, &mut out).is_ok() {
        return Err("value above the maximum encoded".into());
    }
    Ok(VARINT_BOUNDARIES.len() + 1)
}

pub fn filter_matches_exhaustive() -> SuiteResult {
    let filters = oracles::filter_universe();
    let topics = oracles::topic_universe(4);
    for f in &filters {
        for t in &topics {
            if filter_matches(f, t) != oracles::topic_matches(f.as_str(), t.as_str()) {
                return Err(format!("filter {f} vs topic {t}"));
            }
        }
    }
    Ok(filters.len() * topics.len())
}

pub fn filter_covers_exhaustive() -> SuiteResult {
    let sets = oracles::MatchSets::build();
    let n = sets.filters.len();
    for g in 0..n {
        for s in 0..n {
            if filter_covers(&sets.filters[g], &sets.filters[s]) != sets.covers(g, s) {
                return Err(format!("covers({}, {})", sets.filters[g], sets.filters[s]));
            }
        }
    }
    Ok(n * n)
}

pub fn netsvc_round_trip(cases: u32) -> SuiteResult {
    let commands = run(cases, strategies::command(), |c| {
        let bytes = encode_command(&c);
        prop_assert_eq!(&bytes[..3], &[0x03, 0x02, 0x01]);
        // appId, ncapId, timId (16 each), channelId 2, access code 1, offset 4, timeout 8
        prop_assert_eq!(u16::from_be_bytes([bytes[3], bytes[4]]), 63);
        prop_assert_eq!(bytes.len(), 68);
        prop_assert_eq!(decode_command(&bytes).map_err(|e| TestCaseError::fail(e.to_string()))?, c);
        Ok(())
    })?;
    let replies = run(cases, strategies::reply(), |r| {
        let bytes = encode_reply(&r).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert_eq!(&bytes[..3], &[0x03, 0x02, 0x02]);
        prop_assert_eq!(u16::from_be_bytes([bytes[3], bytes[4]]) as usize, bytes.len() - 5);
        prop_assert_eq!(decode_reply(&bytes).map_err(|e| TestCaseError::fail(e.to_string()))?, r);
        Ok(())
    })?;
    Ok(commands + replies)
}
