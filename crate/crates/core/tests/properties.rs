use p1451_core::acl::*;
use p1451_core::mqtt::*;
use p1451_core::netsvc::*;
use p1451_core::teds::*;
use p1451_testkit::oracles::{self, reseal, topic_universe, universe};
use p1451_testkit::{golden_block, strategies, suites};
use proptest::collection::vec;
use proptest::prelude::*;

fn check(result: suites::SuiteResult, at_least: usize) {
    match result {
        Ok(n) => assert!(n >= at_least, "only {n} cases checked"),
        Err(e) => panic!("{e}"),
    }
}

// ------------------------------------------------------------------- mqtt

#[test]
fn mqtt_packet_round_trip() {
    check(suites::mqtt_round_trip(1000), 1000);
}

#[test]
fn varint_boundaries_match_oracle() {
    check(suites::varint_boundaries(), 9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn mqtt_decode_leaves_trailing_octets(p in strategies::packet(), tail in vec(any::<u8>(), 0..8)) {
        let bytes = encode_packet(&p).unwrap();
        let mut buf = bytes.clone();
        buf.extend_from_slice(&tail);
        let (_, used) = decode_packet(&buf).unwrap();
        prop_assert_eq!(used, bytes.len());
    }

    #[test]
    fn mqtt_every_strict_prefix_is_incomplete(p in strategies::packet()) {
        let bytes = encode_packet(&p).unwrap();
        for cut in 0..bytes.len() {
            prop_assert!(decode_packet(&bytes[..cut]).unwrap_err().is_incomplete());
        }
    }

    #[test]
    fn mqtt_arbitrary_input_never_panics(bytes in vec(any::<u8>(), 0..64)) {
        let _ = decode_packet(&bytes);
    }
}

#[test]
fn filter_validation_matches_level_grammar() {
    for s in universe(&["a", "+", "#", "", "a+", "#b"], 3) {
        assert_eq!(validate_filter(&s).is_ok(), oracles::filter_valid(&s), "{s:?}");
    }
}

#[test]
fn filter_matches_agrees_with_oracle_exhaustively() {
    check(suites::filter_matches_exhaustive(), 500_000);
}

#[test]
fn hash_matches_every_non_dollar_topic() {
    let hash = TopicFilter::new("#").unwrap();
    for t in topic_universe(4) {
        assert_eq!(filter_matches(&hash, &t), !t.as_str().starts_with('$'), "{t}");
    }
}

// ---------------------------------------------------------------- acl

#[test]
fn filter_covers_agrees_with_brute_force_exhaustively() {
    check(suites::filter_covers_exhaustive(), 800_000);
}

#[test]
fn filter_covers_is_reflexive_and_transitive() {
    let filters: Vec<TopicFilter> =
        universe(&["a", "+", "#", "$s"], 3).into_iter().filter_map(|s| TopicFilter::new(s).ok()).collect();
    for f in &filters {
        assert!(filter_covers(f, f), "{f}");
    }
    for a in &filters {
        for b in filters.iter().filter(|b| filter_covers(a, b)) {
            for c in filters.iter().filter(|c| filter_covers(b, c)) {
                assert!(filter_covers(a, c), "{a} ⊇ {b} ⊇ {c}");
            }
        }
    }
}

#[test]
fn empty_document_denies_everything() {
    let doc = AclDocument::default();
    for t in topic_universe(2) {
        assert_eq!(check_publish(&doc, "", &t), Decision::Deny);
        assert_eq!(check_subscribe(&doc, "", &TopicFilter::from(t)), Decision::Deny);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn acl_parse_serialize_round_trip(doc in strategies::acl_document()) {
        prop_assert_eq!(parse_acl(&serialize_acl(&doc)).unwrap(), doc);
    }

    #[test]
    fn allowed_subscription_implies_read_of_every_matched_topic(
        doc in strategies::acl_document(),
        requested in strategies::filter(),
    ) {
        for user in ["", "a", "b0"] {
            if check_subscribe(&doc, user, &requested).is_allow() {
                for t in topic_universe(3) {
                    if filter_matches(&requested, &t) {
                        prop_assert!(check_read(&doc, user, &t).is_allow());
                    }
                }
            }
        }
    }

    #[test]
    fn scoped_filters_only_reach_below_scope(scope in "[a-c]{1,2}(/[a-c]{1,2}){0,2}", suffix in strategies::filter()) {
        let candidate = TopicFilter::new(format!("{scope}/{suffix}")).unwrap();
        for filter in [candidate, suffix] {
            if is_within_scope(&scope, &filter) {
                let below = format!("{scope}/");
                for t in universe(&["a", "b", "c", "", "aa"], 5) {
                    let Ok(t) = TopicName::new(t) else { continue };
                    if filter_matches(&filter, &t) {
                        prop_assert!(t.as_str().starts_with(&below), "{} matched {}", filter, t);
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------- teds

#[test]
fn teds_round_trip_against_field_oracle() {
    check(suites::teds_round_trip(1000), 1000);
}

#[test]
fn golden_block_detects_every_single_octet_corruption() {
    check(suites::teds_golden_corruption(), 37 * 255);
}

#[test]
fn golden_block_is_the_encoded_example() {
    assert_eq!(encode_security_teds(&example_security_teds()).unwrap().into_bytes(), golden_block());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn teds_reencode_is_octet_exact_with_unknown_fields(
        t in strategies::security_teds(),
        low in proptest::option::of((0u8..3, vec(any::<u8>(), 0..6))),
        mid in proptest::option::of((4u8..10, vec(any::<u8>(), 0..6))),
    ) {
        let block = encode_security_teds(&t).unwrap().into_bytes();
        // Splice reserved-slot TLVs into their ascending positions.
        let mut body = block[4..block.len() - 2].to_vec();
        if let Some((ty, v)) = &mid {
            let mut tlv = vec![*ty, v.len() as u8];
            tlv.extend_from_slice(v);
            body.splice(7..7, tlv);
        }
        if let Some((ty, v)) = &low {
            let mut tlv = vec![*ty, v.len() as u8];
            tlv.extend_from_slice(v);
            body.splice(0..0, tlv);
        }
        let mut raw = vec![0; 4];
        raw.extend_from_slice(&body);
        raw.extend_from_slice(&[0, 0]);
        let raw = reseal(raw);
        let decoded = decode_security_teds(&raw).unwrap();
        prop_assert_eq!(decoded.unknown_fields.len(), low.is_some() as usize + mid.is_some() as usize);
        prop_assert_eq!(encode_security_teds(&decoded).unwrap().into_bytes(), raw);
    }

    #[test]
    fn teds_arbitrary_input_reencodes_exactly_when_accepted(bytes in vec(any::<u8>(), 0..48)) {
        if let Ok(t) = decode_security_teds(&bytes) {
            prop_assert!(encode_security_teds(&t).unwrap().as_bytes() == bytes.as_slice());
        }
        let sealed = if bytes.len() >= 6 { reseal(bytes.clone()) } else { bytes.clone() };
        if let Ok(t) = decode_security_teds(&sealed) {
            prop_assert!(encode_security_teds(&t).unwrap().as_bytes() == sealed.as_slice());
        }
    }
}

#[test]
fn standard_name_is_total() {
    for code in 0..=255u8 {
        assert!(!standard_name(code).is_empty());
        assert!(!tls_version_name(code).is_empty());
    }
}

// -------------------------------------------------------------- netsvc

#[test]
fn netsvc_round_trip_with_header_constants() {
    check(suites::netsvc_round_trip(1000), 2000);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn length_mismatch_is_rejected(r in strategies::reply(), extra in 1usize..4) {
        let mut bytes = encode_reply(&r).unwrap();
        bytes.extend(std::iter::repeat_n(0u8, extra));
        prop_assert!(decode_reply(&bytes).is_err());
        let bytes = encode_reply(&r).unwrap();
        prop_assert!(decode_reply(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn topics_round_trip_ids(id in strategies::uuid()) {
        prop_assert_eq!(id_from_topic(&command_topic(&id)), Some(id));
        prop_assert_eq!(id_from_topic(&reply_topic(&id)), Some(id));
    }

    #[test]
    fn error_reply_correlates(c in strategies::command(), code in any::<u16>()) {
        prop_assert!(correlate(&c, &ReadTedsReply::error_for(&c, code)));
    }
}
