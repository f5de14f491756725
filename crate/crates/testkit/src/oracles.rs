//! Reference implementations that share no code with the crates under test.

use p1451_core::mqtt::{TopicFilter, TopicName};

/// Remaining-length varint computed from octet-count thresholds and shifts.
pub fn varint(value: usize) -> Vec<u8> {
    let count = match value {
        0..=127 => 1,
        128..=16_383 => 2,
        16_384..=2_097_151 => 3,
        _ => 4,
    };
    (0..count)
        .map(|i| {
            let group = ((value >> (7 * i)) & 0x7f) as u8;
            if i + 1 < count {
                group | 0x80
            } else {
                group
            }
        })
        .collect()
}

fn levels_match(filter: &[&str], topic: &[&str]) -> bool {
    match (filter.split_first(), topic.split_first()) {
        (None, None) => true,
        (Some((&"#", _)), _) => true,
        (Some((&"+", fr)), Some((_, tr))) => levels_match(fr, tr),
        (Some((fl, fr)), Some((tl, tr))) => fl == tl && levels_match(fr, tr),
        _ => false,
    }
}

/// Recursive level-by-level matcher with the `$` rule applied up front.
pub fn topic_matches(filter: &str, topic: &str) -> bool {
    let f: Vec<&str> = filter.split('/').collect();
    let t: Vec<&str> = topic.split('/').collect();
    if (f[0] == "+" || f[0] == "#") && t[0].starts_with('$') {
        return false;
    }
    levels_match(&f, &t)
}

/// Grammar check done on the level list rather than the string.
pub fn filter_valid(s: &str) -> bool {
    if s.is_empty() {
        return false;
    }
    let levels: Vec<&str> = s.split('/').collect();
    levels.iter().enumerate().all(|(i, l)| {
        let hash_ok = !l.contains('#') || (*l == "#" && i == levels.len() - 1);
        let plus_ok = !l.contains('+') || *l == "+";
        hash_ok && plus_ok
    })
}

/// Every '/'-joined string of 1..=depth levels drawn from `alphabet`.
pub fn universe(alphabet: &[&str], depth: usize) -> Vec<String> {
    let mut all = Vec::new();
    let mut frontier: Vec<String> = alphabet.iter().map(|s| s.to_string()).collect();
    for _ in 0..depth {
        all.extend(frontier.iter().cloned());
        frontier = frontier.iter().flat_map(|p| alphabet.iter().map(move |l| format!("{p}/{l}"))).collect();
    }
    all
}

pub fn filter_universe() -> Vec<TopicFilter> {
    universe(&["a", "b", "+", "#", "", "$s"], 4).into_iter().filter_map(|s| TopicFilter::new(s).ok()).collect()
}

pub fn topic_universe(depth: usize) -> Vec<TopicName> {
    universe(&["a", "b", "c", "", "$s"], depth).into_iter().filter_map(|s| TopicName::new(s).ok()).collect()
}

/// For each filter of the bounded universe, the bitset of topics it matches.
/// Topics go one level deeper than filters so every non-cover has a witness.
pub struct MatchSets {
    pub filters: Vec<TopicFilter>,
    pub bits: Vec<Vec<u64>>,
}

impl MatchSets {
    pub fn build() -> Self {
        let filters = filter_universe();
        let topics = topic_universe(5);
        let words = topics.len().div_ceil(64);
        let bits = filters
            .iter()
            .map(|f| {
                let mut b = vec![0u64; words];
                for (i, t) in topics.iter().enumerate() {
                    if topic_matches(f.as_str(), t.as_str()) {
                        b[i / 64] |= 1 << (i % 64);
                    }
                }
                b
            })
            .collect();
        MatchSets { filters, bits }
    }

    /// Whether filter `general` matches every topic that `specific` matches.
    pub fn covers(&self, general: usize, specific: usize) -> bool {
        self.bits[specific].iter().zip(&self.bits[general]).all(|(s, g)| s & !g == 0)
    }
}

/// Summation checksum: ones' complement of the 16-bit sum of all octets.
pub fn teds_checksum(octets: &[u8]) -> u16 {
    let sum: u64 = octets.iter().map(|&b| b as u64).sum();
    (0xFFFF - (sum % 0x10000)) as u16
}

/// Builds a security TEDS block field by field: TEDS id, level letter,
/// entry count, then one code/version pair per entry, framed by the
/// length and checksum.
pub fn security_teds_block(teds_id: [u8; 5], level: char, entries: &[(u8, u8)]) -> Vec<u8> {
    let mut body = vec![3, 5];
    body.extend_from_slice(&teds_id);
    body.extend_from_slice(&[10, 1, level as u8]);
    body.extend_from_slice(&[11, 1, entries.len() as u8]);
    for (i, (code, version)) in entries.iter().enumerate() {
        let t = 12 + 2 * i as u8;
        body.extend_from_slice(&[t, 1, *code, t + 1, 1, *version]);
    }
    let mut block = ((body.len() + 2) as u32).to_be_bytes().to_vec();
    block.extend_from_slice(&body);
    let c = teds_checksum(&block);
    block.extend_from_slice(&c.to_be_bytes());
    block
}

/// Recomputes length and checksum of a block in place of the old ones.
pub fn reseal(mut block: Vec<u8>) -> Vec<u8> {
    block.truncate(block.len() - 2);
    let len = (block.len() - 4 + 2) as u32;
    block[..4].copy_from_slice(&len.to_be_bytes());
    let c = teds_checksum(&block);
    block.extend_from_slice(&c.to_be_bytes());
    block
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_reproduces_frozen_golden_block() {
        let block = security_teds_block([1, 6, 16, 2, 1], 'E', &[(10, 4), (12, 1), (128, 1)]);
        assert_eq!(block, crate::golden_block());
        assert_eq!(u32::from_be_bytes([block[0], block[1], block[2], block[3]]), 33);
    }

    #[test]
    fn varint_examples() {
        assert_eq!(varint(0), [0]);
        assert_eq!(varint(128), [0x80, 0x01]);
        assert_eq!(varint(268_435_455), [0xff, 0xff, 0xff, 0x7f]);
    }
}
