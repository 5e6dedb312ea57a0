mod common;

use common::net::{probe, run, shipped};
use proptest::prelude::*;
use protomut::analysis::FindingKind;
use protomut::minip::{decode, encode, Frame, Packet, CLOSE};
use protomut::netsim::Variant;
use protomut::scenario::Sut;
use protomut::trace::EventKind;

fn frame() -> impl Strategy<Value = Frame> {
    prop_oneof![
        proptest::collection::vec(any::<u8>(), 0..1024).prop_map(Frame::Ping),
        proptest::collection::vec(any::<u8>(), 0..1024).prop_map(Frame::Pong),
        any::<u64>().prop_map(Frame::Timestamp),
    ]
}

proptest! {
    #[test]
    fn decode_inverts_encode(frames in proptest::collection::vec(frame(), 0..=3)) {
        let p = Packet { frames };
        prop_assert_eq!(decode(&encode(&p).unwrap()).unwrap(), p);
    }

    #[test]
    fn decode_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..64)) {
        let _ = decode(&bytes);
    }
}

fn ping_with(data: &[u8]) -> Vec<u8> {
    encode(&Packet { frames: vec![Frame::Ping(data.to_vec()), Frame::Timestamp(0)] }).unwrap()
}

fn crashed(variant: Variant, cap: usize, data: &[u8]) -> bool {
    let (trace, _) = run(&probe(&[ping_with(data)], 1000), &Sut::Custom { variant, buffer_cap: cap }, 0);
    trace.events.iter().any(|e| e.kind == EventKind::Crash)
}

/// Every payload up to three bytes over an alphabet that can spell `%n`.
fn small_payloads() -> Vec<Vec<u8>> {
    let alphabet = [0x00, 0x25, 0x6e, 0x78];
    let mut out = vec![vec![]];
    let mut layer = vec![vec![]];
    for _ in 0..3 {
        layer = layer.iter().flat_map(|p: &Vec<u8>| alphabet.iter().map(move |&b| [p.as_slice(), &[b]].concat())).collect();
        out.extend(layer.iter().cloned());
    }
    out
}

#[test]
fn format_string_variant_crashes_exactly_on_percent_n() {
    let payloads = small_payloads();
    assert_eq!(payloads.len(), 85);
    for d in payloads {
        let expected = d.windows(2).any(|w| w == [0x25, 0x6e]);
        assert_eq!(crashed(Variant::VFmt, 32, &d), expected, "payload {}", hex::encode(&d));
        assert!(!crashed(Variant::Conforming, 32, &d));
    }
}

#[test]
fn overflow_variant_crashes_exactly_past_the_cap() {
    for cap in [1, 4, 32] {
        for len in 0..=cap + 8 {
            assert_eq!(crashed(Variant::VOvf, cap, &vec![0x61; len]), len > cap, "cap {cap} len {len}");
        }
    }
}

#[test]
fn conforming_endpoints_conform_over_a_hundred_exchanges() {
    let (trace, findings) = run(&shipped("conformance"), &Sut::Builtin(Variant::Conforming), 3);
    assert!(findings.is_empty(), "{findings:?}");
    assert_eq!(trace.events.iter().filter(|e| e.kind == EventKind::Send && e.endpoint == "server").count(), 100);
}

#[test]
fn loop_variant_repeats_close_after_one_malformed_frame() {
    let s = probe(&[vec![0x01, 0x00, 0x05, 0x61]], 2000);
    let (trace, findings) = run(&s, &Sut::Builtin(Variant::VLoop), 0);
    let closes = trace.events.iter().filter(|e| e.kind == EventKind::Send && e.bytes.as_deref() == Some(&CLOSE[..])).count();
    assert!(closes >= 10, "{closes} closes");
    assert!(findings.iter().any(|f| f.kind == FindingKind::LoopDetected));
}

#[test]
fn loop_variant_terminates_normally_on_conforming_traffic() {
    let (trace, findings) = run(&shipped("ping_pong"), &Sut::Builtin(Variant::VLoop), 0);
    assert!(findings.is_empty(), "{findings:?}");
    assert_eq!(trace.events.last().unwrap().detail.as_deref(), Some("idle"));
}
