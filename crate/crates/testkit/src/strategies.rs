use p1451_core::acl::{Access, AclDocument, AclRule};
use p1451_core::mqtt::{Connect, Packet, Publish, QoS, TopicFilter, TopicName};
use p1451_core::netsvc::{ReadTedsCommand, ReadTedsReply, TimeDuration, Uuid1451};
use p1451_core::teds::{SecurityLevel, SecurityStandardEntry, SecurityTeds, TedsId};
use proptest::collection::vec;
use proptest::prelude::*;

pub fn topic() -> impl Strategy<Value = TopicName> {
    "[a-zA-Z0-9 ._$/-]{1,24}".prop_map(|s| TopicName::new(s).unwrap())
}

pub fn filter() -> impl Strategy<Value = TopicFilter> {
    (vec(prop_oneof![3 => "[a-z0-9]{0,4}", 1 => Just("+".to_string())], 1..5), any::<bool>()).prop_filter_map(
        "empty filter",
        |(mut levels, hash)| {
            if hash {
                levels.push("#".into());
            }
            TopicFilter::new(levels.join("/")).ok()
        },
    )
}

pub fn qos() -> impl Strategy<Value = QoS> {
    prop_oneof![Just(QoS::AtMostOnce), Just(QoS::AtLeastOnce)]
}

fn packet_id() -> impl Strategy<Value = u16> {
    1..=u16::MAX
}

pub fn packet() -> impl Strategy<Value = Packet> {
    let connect = (
        "[a-zA-Z0-9-]{0,23}",
        proptest::option::of("[a-z0-9]{1,12}"),
        proptest::option::of(vec(any::<u8>(), 0..24)),
        any::<u16>(),
        any::<bool>(),
    )
        .prop_map(|(client_id, username, password, keep_alive, clean_session)| {
            let password = if username.is_some() { password } else { None };
            Packet::Connect(Connect { client_id, username, password, keep_alive, clean_session })
        });
    let publish = (topic(), vec(any::<u8>(), 0..200), qos(), packet_id(), any::<bool>(), any::<bool>()).prop_map(
        |(topic, payload, qos, id, dup, retain)| {
            let (packet_id, dup) = match qos {
                QoS::AtMostOnce => (None, false),
                QoS::AtLeastOnce => (Some(id), dup),
            };
            Packet::Publish(Publish { topic, payload, qos, packet_id, dup, retain })
        },
    );
    prop_oneof![
        connect,
        (any::<bool>(), any::<u8>())
            .prop_map(|(session_present, return_code)| Packet::Connack { session_present, return_code }),
        publish,
        packet_id().prop_map(|packet_id| Packet::Puback { packet_id }),
        (packet_id(), vec((filter(), qos()), 1..5))
            .prop_map(|(packet_id, entries)| Packet::Subscribe { packet_id, entries }),
        (packet_id(), vec(prop_oneof![Just(0u8), Just(1), Just(0x80)], 1..5))
            .prop_map(|(packet_id, return_codes)| Packet::Suback { packet_id, return_codes }),
        (packet_id(), vec(filter(), 1..5)).prop_map(|(packet_id, filters)| Packet::Unsubscribe { packet_id, filters }),
        packet_id().prop_map(|packet_id| Packet::Unsuback { packet_id }),
        Just(Packet::Pingreq),
        Just(Packet::Pingresp),
        Just(Packet::Disconnect),
    ]
}

pub fn level() -> impl Strategy<Value = SecurityLevel> {
    prop::sample::select(SecurityLevel::ALL.to_vec())
}

pub fn entry() -> impl Strategy<Value = SecurityStandardEntry> {
    (prop_oneof![0u8..14, 128u8..=255], any::<u8>()).prop_map(|(c, v)| SecurityStandardEntry::new(c, v))
}

pub fn security_teds() -> impl Strategy<Value = SecurityTeds> {
    (any::<[u8; 5]>(), level(), vec(entry(), 0..=10)).prop_map(|(id, level, entries)| SecurityTeds {
        teds_id: TedsId::from_bytes(id),
        level,
        entries,
        unknown_fields: vec![],
    })
}

pub fn uuid() -> impl Strategy<Value = Uuid1451> {
    any::<[u8; 16]>().prop_map(Uuid1451)
}

pub fn command() -> impl Strategy<Value = ReadTedsCommand> {
    (uuid(), uuid(), uuid(), any::<u16>(), any::<u8>(), any::<u32>(), any::<u32>(), 0u32..1_000_000_000).prop_map(
        |(app_id, ncap_id, tim_id, channel_id, teds_access_code, teds_offset, s, ns)| ReadTedsCommand {
            app_id,
            ncap_id,
            tim_id,
            channel_id,
            teds_access_code,
            teds_offset,
            timeout: TimeDuration::new(s, ns).unwrap(),
        },
    )
}

pub fn reply() -> impl Strategy<Value = ReadTedsReply> {
    (any::<u16>(), uuid(), uuid(), uuid(), any::<u16>(), any::<u32>(), vec(any::<u8>(), 0..300)).prop_map(
        |(error_code, app_id, ncap_id, tim_id, channel_id, teds_offset, raw_teds_block)| ReadTedsReply {
            error_code,
            app_id,
            ncap_id,
            tim_id,
            channel_id,
            teds_offset,
            raw_teds_block,
        },
    )
}

pub fn acl_document() -> impl Strategy<Value = AclDocument> {
    let access = prop_oneof![Just(Access::Read), Just(Access::Write), Just(Access::ReadWrite)];
    vec((prop_oneof![Just(String::new()), "[a-z0-9_]{1,8}"], access, filter()), 0..12)
        .prop_map(|rules| AclDocument::new(rules.into_iter().map(|(u, a, f)| AclRule::new(u, a, f)).collect()))
}
