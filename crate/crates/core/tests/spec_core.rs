mod common;

use proptest::prelude::*;
use protomut::protocol::{maxip, minip};
use protomut::spec::{
    check_event, compose, evaluate, parse_predicate, parse_spec, print_predicate, print_spec, Bridge, Predicate, ProtocolSpec, SpecError,
    Subject, Value, ViolationKind,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn packet(kinds: &[u8]) -> Subject {
    Subject::new("packet").with("kinds", Value::Bytes(kinds.to_vec()))
}

#[test]
fn conforming_ping_packet_has_no_violations() {
    let spec = &minip().spec;
    assert!(check_event(spec, "packet.handle", &packet(&[1, 3]), 0, None).unwrap().is_empty());
    let ping = Subject::new("ping").with("data", Value::Bytes(b"ping".to_vec()));
    assert!(check_event(spec, "ping_frame.ping.handle", &ping, 0, None).unwrap().is_empty());
}

#[test]
fn three_frames_violate_the_frame_count() {
    let v = check_event(&minip().spec, "packet.handle", &packet(&[1, 3, 3]), 10, None).unwrap();
    assert_eq!(v.len(), 1);
    assert!(matches!(&v[0].kind, ViolationKind::Requirement { index: 0, requirement } if requirement == "p.kinds.end = 2"));
    assert_eq!(v[0].subject, "packet{kinds=010303}");
    assert_eq!(v[0].clock, 10);
}

#[test]
fn late_pong_violates_the_deadline() {
    let pong = Subject::new("pong").with("data", Value::Bytes(b"pong".to_vec()));
    let v = check_event(&minip().spec, "pong_frame.pong.handle", &pong, 3500, Some(0)).unwrap();
    assert_eq!(v.len(), 1);
    assert!(matches!(v[0].kind, ViolationKind::Deadline { within_ms: 3000, trigger_at: 0, .. }));
    assert!(check_event(&minip().spec, "pong_frame.pong.handle", &pong, 3000, Some(0)).unwrap().is_empty());
}

#[test]
fn zero_requirements_and_unknown_events() {
    let ts = Subject::new("timestamp").with("value", Value::Int(1));
    assert!(check_event(&minip().spec, "timestamp_frame.timestamp.handle", &ts, 0, None).unwrap().is_empty());
    assert_eq!(check_event(&minip().spec, "nope", &ts, 0, None), Err(SpecError::UnknownEvent("nope".into())));
}

#[test]
fn compose_without_bridges_is_a_disjoint_union() {
    let sys = compose(&minip().spec, &maxip().spec, &[]).unwrap();
    assert_eq!(sys.components.len(), minip().spec.components.len() + maxip().spec.components.len());
    assert!(sys.bridges.is_empty());
    assert_eq!(sys.guarantees.len(), 7);
    assert!(sys.component("minip.ping_frame").is_some() && sys.component("maxip.hello_frame").is_some());
    sys.validate().unwrap();
}

#[test]
fn bridged_maxip_packets_are_checked_against_minip() {
    let bridge = [Bridge { from_event: "maxip.packet.handle".into(), to_event: "minip.packet.handle".into() }];
    let sys = compose(&minip().spec, &maxip().spec, &bridge).unwrap();
    let reflected = Subject::new("maxip.packet").with("kinds", Value::Bytes(vec![0x01]));
    let v = check_event(&sys, "maxip.packet.handle", &reflected, 0, None).unwrap();
    assert!(v.iter().any(|v| v.component == "minip.packet"), "{v:?}");
    assert!(v.iter().all(|v| v.component != "maxip.packet"));
}

#[test]
fn dangling_bridge_and_collisions() {
    let bridge = [Bridge { from_event: "maxip.nothing".into(), to_event: "minip.packet.handle".into() }];
    assert_eq!(compose(&minip().spec, &maxip().spec, &bridge), Err(SpecError::DanglingBridge("maxip.nothing".into())));
    assert!(matches!(compose(&minip().spec, &minip().spec, &[]), Err(SpecError::NameCollision(_))));
}

fn tiny() -> ProtocolSpec {
    ProtocolSpec::from_text(
        "protocol tiny;\nschema msg { body: bytes[8]; }\ncomponent msg_frame : frame(msg) {\n  before msg_frame.msg.handle(f);\n  require f.body.end > 0;\n}\n",
    )
    .unwrap()
}

#[test]
fn compose_is_associative_up_to_naming() {
    let (a, b, c) = (&minip().spec, &maxip().spec, &tiny());
    let left = compose(&compose(a, b, &[]).unwrap(), c, &[]).unwrap();
    let right = compose(a, &compose(b, c, &[]).unwrap(), &[]).unwrap();
    assert_eq!(left, right);
    assert_eq!(left.name, "minip+maxip+tiny");
}

#[test]
fn validation_reports_every_problem_with_location() {
    let src = "protocol bad;\nschema a { d: bytes[4]; n: u8; }\n\
        component c : frame(a) {\n  before c.a.handle(f);\n  within 0 after c.a.handle;\n  require f.x = 1;\n  require f.n = 300;\n  require f.d.value(9) = 1;\n}\n\
        guarantee c -> c;\n";
    let errors = ProtocolSpec::from_text(src).unwrap_err();
    let text: Vec<String> = errors.iter().map(|e| e.to_string()).collect();
    assert!(text.iter().any(|e| e.contains("unresolved field `x`") && e.contains("requirement #1")), "{text:?}");
    assert!(errors.iter().any(|e| matches!(e, SpecError::NonPositiveDeadline(_))));
    assert!(errors.iter().any(|e| matches!(e, SpecError::LiteralOutOfDomain(..))));
    assert!(errors.iter().any(|e| matches!(e, SpecError::CyclicGuarantees(_))));
    assert!(errors.len() >= 5, "{text:?}");
}

#[test]
fn shipped_specs_round_trip_through_text() {
    for spec in [&minip().spec, &maxip().spec] {
        let printed = print_spec(spec);
        assert_eq!(&parse_spec(&printed).unwrap(), spec);
        assert_eq!(print_spec(&parse_spec(&printed).unwrap()), printed);
    }
}

#[test]
fn format_string_existential_on_a_50_byte_payload() {
    let p = parse_predicate(
        "exists I. I < f.data.end - 8 & f.data.value(I) = 0x25 & f.data.value(I+1) = 0x78 & f.data.value(I+2) = 0x25 & f.data.value(I+3) = 0x6e",
    )
    .unwrap();
    let mut data = vec![0x41u8; 50];
    data[6..10].copy_from_slice(&[0x25, 0x78, 0x25, 0x6e]);
    let s = Subject::new("ping").with("data", Value::Bytes(data.clone()));
    // Oracle: scan every offset below end - 8 by hand.
    let oracle = (0..data.len() - 8).any(|i| data[i..].starts_with(&[0x25, 0x78, 0x25, 0x6e]));
    assert!(oracle);
    assert_eq!(evaluate(&p, &s).unwrap(), oracle);
}

fn needle_oracle(data: &[u8], needle: &[u8], below: i128) -> bool {
    (0..below.max(0) as usize).any(|i| data.get(i..i + needle.len()) == Some(needle))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn evaluation_is_pure(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = common::predicate(&mut rng, 3);
        let s = common::subject(&mut rng, 64);
        prop_assert_eq!(evaluate(&p, &s), evaluate(&p, &s));
    }

    #[test]
    fn de_morgan(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = common::predicate(&mut rng, 2);
        let b = common::predicate(&mut rng, 2);
        let s = common::subject(&mut rng, 64);
        let lhs = evaluate(&Predicate::not(Predicate::and(a.clone(), b.clone())), &s);
        let rhs = evaluate(&Predicate::or(Predicate::not(a), Predicate::not(b)), &s);
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn exists_agrees_with_brute_force(data in proptest::collection::vec(prop_oneof![Just(0x25u8), Just(0x6e), any::<u8>()], 0..1024), slack in 0u64..12) {
        let p = parse_predicate(&format!("exists I. I < f.data.end - {slack} & f.data.value(I) = 0x25 & f.data.value(I+1) = 0x6e")).unwrap();
        let s = Subject::new("ping").with("data", Value::Bytes(data.clone()));
        prop_assert_eq!(evaluate(&p, &s).unwrap(), needle_oracle(&data, &[0x25, 0x6e], data.len() as i128 - slack as i128));
    }

    #[test]
    fn predicates_round_trip_through_text(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = common::predicate(&mut rng, 4);
        let printed = print_predicate(&p, "f");
        prop_assert_eq!(parse_predicate(&printed).unwrap(), p, "{}", printed);
    }

    #[test]
    fn parser_never_panics(src in "\\PC{0,200}") {
        let _ = parse_predicate(&src);
        let _ = parse_spec(&src);
    }
}
