mod common;

use std::time::Duration;

use common::{filter, next_message, topic, Fixture};
use p1451_core::mqtt::QoS;
use p1451_core::teds::SecurityLevel;
use p1451_node::client::{ClientError, MqttClient};

const QUIET: Duration = Duration::from_millis(300);
const LOUD: Duration = Duration::from_secs(3);

#[tokio::test]
async fn routes_by_filter_without_cross_talk() {
    let fx = Fixture::new();
    let broker = fx.broker(SecurityLevel::N).await;
    let (a, mut a_rx) = MqttClient::connect(fx.client(&broker, "a", None)).await.unwrap();
    let (b, mut b_rx) = MqttClient::connect(fx.client(&broker, "b", None)).await.unwrap();
    let (p, _) = MqttClient::connect(fx.client(&broker, "p", None)).await.unwrap();
    assert_eq!(a.subscribe(filter("s/a/+"), QoS::AtLeastOnce).await.unwrap(), 1);
    assert_eq!(b.subscribe(filter("s/b/#"), QoS::AtMostOnce).await.unwrap(), 0);

    p.publish(topic("s/a/x"), b"to-a".to_vec(), QoS::AtLeastOnce).await.unwrap();
    p.publish(topic("s/b/y/z"), b"to-b".to_vec(), QoS::AtLeastOnce).await.unwrap();

    let m = next_message(&mut a_rx, LOUD).await.unwrap();
    assert_eq!((m.topic.as_str(), m.payload.as_slice(), m.qos), ("s/a/x", &b"to-a"[..], QoS::AtLeastOnce));
    let m = next_message(&mut b_rx, LOUD).await.unwrap();
    assert_eq!((m.topic.as_str(), m.payload.as_slice(), m.qos), ("s/b/y/z", &b"to-b"[..], QoS::AtMostOnce));
    assert!(next_message(&mut a_rx, QUIET).await.is_none());
    assert!(next_message(&mut b_rx, QUIET).await.is_none());
    broker.stop().await;
}

#[tokio::test]
async fn qos1_publish_is_acknowledged_without_subscribers() {
    let fx = Fixture::new();
    let broker = fx.broker(SecurityLevel::N).await;
    let (p, _) = MqttClient::connect(fx.client(&broker, "p", None)).await.unwrap();
    tokio::time::timeout(LOUD, p.publish(topic("nobody/listens"), vec![1, 2, 3], QoS::AtLeastOnce))
        .await
        .expect("PUBACK")
        .unwrap();
    broker.stop().await;
}

#[tokio::test]
async fn overlapping_filters_deliver_once_per_filter() {
    let fx = Fixture::new();
    let broker = fx.broker(SecurityLevel::N).await;
    let (c, mut rx) = MqttClient::connect(fx.client(&broker, "c", None)).await.unwrap();
    c.subscribe(filter("o/#"), QoS::AtLeastOnce).await.unwrap();
    c.subscribe(filter("o/+"), QoS::AtMostOnce).await.unwrap();
    c.publish(topic("o/x"), b"m".to_vec(), QoS::AtLeastOnce).await.unwrap();
    let mut qos = vec![next_message(&mut rx, LOUD).await.unwrap().qos, next_message(&mut rx, LOUD).await.unwrap().qos];
    qos.sort_by_key(|q| *q as u8);
    assert_eq!(qos, [QoS::AtMostOnce, QoS::AtLeastOnce]);
    assert!(next_message(&mut rx, QUIET).await.is_none());
    broker.stop().await;
}

#[tokio::test]
async fn dollar_topics_are_not_matched_by_leading_wildcards() {
    let fx = Fixture::new();
    let broker = fx.broker(SecurityLevel::N).await;
    let (c, mut rx) = MqttClient::connect(fx.client(&broker, "c", None)).await.unwrap();
    c.subscribe(filter("#"), QoS::AtMostOnce).await.unwrap();
    c.subscribe(filter("$SYS/x"), QoS::AtMostOnce).await.unwrap();
    c.publish(topic("$SYS/x"), b"sys".to_vec(), QoS::AtLeastOnce).await.unwrap();
    assert_eq!(next_message(&mut rx, LOUD).await.unwrap().topic.as_str(), "$SYS/x");
    assert!(next_message(&mut rx, QUIET).await.is_none());
    broker.stop().await;
}

#[tokio::test]
async fn second_connect_with_same_client_id_takes_over() {
    let fx = Fixture::new();
    let broker = fx.broker(SecurityLevel::N).await;
    let (first, _) = MqttClient::connect(fx.client(&broker, "dup", None)).await.unwrap();
    let (second, mut rx) = MqttClient::connect(fx.client(&broker, "dup", None)).await.unwrap();
    tokio::time::timeout(LOUD, async {
        while !first.is_closed() {
            tokio::time::sleep(Duration::from_millis(10)).await;
        }
    })
    .await
    .expect("first session closed");
    second.subscribe(filter("t"), QoS::AtMostOnce).await.unwrap();
    second.publish(topic("t"), b"x".to_vec(), QoS::AtLeastOnce).await.unwrap();
    assert!(next_message(&mut rx, LOUD).await.is_some());
    assert_eq!(broker.session_count(), 1);
    broker.stop().await;
}

#[tokio::test]
async fn wrong_password_and_anonymous_are_refused_with_distinct_codes() {
    let fx = Fixture::new();
    let broker = fx.broker(SecurityLevel::B).await;
    let mut bad = fx.client(&broker, "bad", Some("app01"));
    bad.password = Some("not-the-password".into());
    assert!(matches!(MqttClient::connect(bad).await, Err(ClientError::Refused(4))));
    assert!(matches!(MqttClient::connect(fx.client(&broker, "anon", None)).await, Err(ClientError::Refused(5))));
    assert!(MqttClient::connect(fx.client(&broker, "good", Some("app01"))).await.is_ok());
    broker.stop().await;
}

#[tokio::test]
async fn denied_publish_is_dropped_and_connection_stays_open() {
    let fx = Fixture::new();
    fx.write_acl(common::SERVICE_ACL);
    let broker = fx.broker(SecurityLevel::D).await;
    let (ncap, mut ncap_rx) = MqttClient::connect(fx.client(&broker, "ncap", Some("ncap01"))).await.unwrap();
    let (app, _) = MqttClient::connect(fx.client(&broker, "app", Some("app01"))).await.unwrap();
    assert_eq!(ncap.subscribe(filter("1451.1.6/cmd/#"), QoS::AtLeastOnce).await.unwrap(), 1);
    assert_eq!(ncap.subscribe(filter("1451.1.6/#"), QoS::AtLeastOnce).await.unwrap(), 0x80);

    // ncap01 may not write commands: acknowledged, but nobody receives it.
    ncap.publish(topic("1451.1.6/cmd/00"), b"forged".to_vec(), QoS::AtLeastOnce).await.unwrap();
    assert!(next_message(&mut ncap_rx, QUIET).await.is_none());
    assert!(!ncap.is_closed());

    app.publish(topic("1451.1.6/cmd/00"), b"real".to_vec(), QoS::AtLeastOnce).await.unwrap();
    assert_eq!(next_message(&mut ncap_rx, LOUD).await.unwrap().payload, b"real");
    broker.stop().await;
}

#[tokio::test]
async fn reload_revokes_subscriptions_the_new_policy_denies() {
    let fx = Fixture::new();
    fx.write_acl(common::SERVICE_ACL);
    let broker = fx.broker(SecurityLevel::D).await;
    let (ncap, mut rx) = MqttClient::connect(fx.client(&broker, "ncap", Some("ncap01"))).await.unwrap();
    let (app, _) = MqttClient::connect(fx.client(&broker, "app", Some("app01"))).await.unwrap();
    ncap.subscribe(filter("1451.1.6/cmd/#"), QoS::AtLeastOnce).await.unwrap();

    let narrowed = common::SERVICE_ACL.replace("topic read 1451.1.6/cmd/#", "topic read 1451.1.6/cmd/aa");
    std::fs::write(&fx.acl, narrowed).unwrap();
    let outcome = broker.reload_acl().unwrap();
    assert_eq!(outcome.revoked, vec![("ncap".to_string(), filter("1451.1.6/cmd/#"))]);
    assert_eq!(broker.subscriptions_of("ncap").unwrap(), vec![]);

    app.publish(topic("1451.1.6/cmd/aa"), b"x".to_vec(), QoS::AtLeastOnce).await.unwrap();
    assert!(next_message(&mut rx, QUIET).await.is_none());
    broker.stop().await;
}

#[tokio::test]
async fn corrupt_acl_reload_keeps_previous_policy() {
    let fx = Fixture::new();
    fx.write_acl(common::SERVICE_ACL);
    let broker = fx.broker(SecurityLevel::D).await;
    let before = broker.acl_snapshot();
    std::fs::write(&fx.acl, "user ncap01\ntopic read bad/#/filter\n").unwrap();
    assert!(broker.reload_acl().is_err());
    assert_eq!(*broker.acl_snapshot(), *before);
    let (ncap, _) = MqttClient::connect(fx.client(&broker, "ncap", Some("ncap01"))).await.unwrap();
    assert_eq!(ncap.subscribe(filter("1451.1.6/cmd/#"), QoS::AtLeastOnce).await.unwrap(), 1);
    broker.stop().await;
}

#[tokio::test]
async fn acl_file_changes_are_picked_up_by_polling() {
    let fx = Fixture::new();
    let broker = fx.broker(SecurityLevel::D).await;
    let (ncap, _) = MqttClient::connect(fx.client(&broker, "ncap", Some("ncap01"))).await.unwrap();
    assert_eq!(ncap.subscribe(filter("1451.1.6/cmd/#"), QoS::AtLeastOnce).await.unwrap(), 0x80);
    fx.write_acl(common::SERVICE_ACL);
    let deadline = tokio::time::Instant::now() + LOUD;
    while broker.acl_snapshot().rules.is_empty() {
        assert!(tokio::time::Instant::now() < deadline, "ACL change not noticed");
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    assert_eq!(ncap.subscribe(filter("1451.1.6/cmd/#"), QoS::AtLeastOnce).await.unwrap(), 1);
    broker.stop().await;
}

#[tokio::test]
async fn encrypted_level_accepts_tls_and_rejects_plaintext() {
    let fx = Fixture::new();
    let broker = fx.broker(SecurityLevel::A).await;
    let (c, mut rx) = MqttClient::connect(fx.client(&broker, "tls", None)).await.unwrap();
    c.subscribe(filter("enc"), QoS::AtLeastOnce).await.unwrap();
    c.publish(topic("enc"), b"secret".to_vec(), QoS::AtLeastOnce).await.unwrap();
    assert_eq!(next_message(&mut rx, LOUD).await.unwrap().payload, b"secret");

    let plain = fx.client(&broker, "plain", None).tls(None);
    assert!(MqttClient::connect(plain).await.is_err());

    let mut wrong_ca = fx.client(&broker, "wrong-ca", None);
    let other = Fixture::new();
    wrong_ca.tls = Some(other.tls_options());
    // Handshake failures surface as I/O errors carrying the rustls cause.
    match MqttClient::connect(wrong_ca).await {
        Err(ClientError::Io(e)) => assert_eq!(e.kind(), std::io::ErrorKind::InvalidData, "{e}"),
        other => panic!("expected certificate rejection, got {:?}", other.err()),
    }
    broker.stop().await;
}
