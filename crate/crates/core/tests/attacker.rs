mod common;

use common::net::{run, shipped};
use proptest::prelude::*;
use protomut::attacker::{decode_as, generate_step, AttackerModel, Vector};
use protomut::mutation::{enumerate, MutationKind};
use protomut::netsim::{SystemComponent, Variant};
use protomut::protocol::{self, Role};
use protomut::scenario::{Scenario, Sut};
use protomut::spec::evaluate;
use protomut::trace::{ClockMode, EventKind, Trace};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Emitted packets re-decode under the attacker's spec and satisfy the
    /// plan and the mutated requirement.
    #[test]
    fn attack_packets_are_self_consistent(pick in any::<prop::sample::Index>(), seed in any::<u64>(), step in 0u32..8) {
        let spec = &protocol::minip().spec;
        let mutants = enumerate(spec, &MutationKind::ALL, 3, usize::MAX).mutants;
        let m = mutants[pick.index(mutants.len())].clone();
        let model = AttackerModel::new(Vector::MaliciousClient, protocol::minip(), spec, Some(m.clone()), &[], None).unwrap();
        let Ok(plan) = model.plan(Role::Client, 0) else { return Ok(()) };
        let Ok(bytes) = generate_step(&plan, seed, step) else { return Ok(()) };
        let subjects = decode_as(&plan, &bytes).expect("re-decodes");
        for s in &subjects {
            if let Some(kp) = plan.kinds.get(&s.kind) {
                for c in &kp.constraints {
                    prop_assert_eq!(evaluate(c, s), Ok(true));
                }
            }
        }
        if let Some((component, index)) = m.mutated_requirement() {
            let c = m.spec.component(component).unwrap();
            for s in subjects.iter().filter(|s| s.kind == c.kind) {
                prop_assert_eq!(evaluate(&c.requirements[index], s), Ok(true));
            }
        }
    }

    #[test]
    fn runs_reproduce_from_scenario_and_seed(seed in any::<u64>()) {
        let s = shipped("format_string");
        let sut = Sut::Builtin(Variant::VFmt);
        let a = s.run(&sut, seed, 0, ClockMode::Virtual).unwrap().export();
        let b = s.run(&sut, seed, 0, ClockMode::Virtual).unwrap().export();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn unmutated_client_attack_is_plain_conformance_traffic() {
    let s = shipped("malicious_client");
    let (trace, findings) = run(&s, &Sut::Builtin(Variant::Conforming), 8);
    assert!(findings.is_empty(), "{findings:?}");
    let sc = SystemComponent::new(protocol::minip().spec.clone(), [("attacker".to_string(), "minip".to_string())]).unwrap();
    let sent: Vec<_> = trace.events.iter().filter(|e| e.kind == EventKind::Send && e.endpoint == "attacker").collect();
    assert_eq!(sent.len(), s.file.steps as usize);
    for e in sent {
        assert_eq!(sc.check("attacker", e.bytes.as_deref().unwrap(), e.time_ms).unwrap(), vec![], "step {:?}", e.detail);
    }
}

/// (time, endpoint, peer, bytes) of every send and delivery outside the
/// interceptor.
fn traffic(t: &Trace) -> Vec<(u64, String, Option<String>, Option<Vec<u8>>)> {
    t.events
        .iter()
        .filter(|e| matches!(e.kind, EventKind::Send | EventKind::Deliver) && e.endpoint != "mitm")
        .map(|e| (e.time_ms, e.endpoint.clone(), e.peer.clone(), e.bytes.clone()))
        .collect()
}

#[test]
fn passthrough_mitm_leaves_traffic_unchanged() {
    let base = common::net::assets().join("scenarios");
    let with = std::fs::read_to_string(base.join("reflect.json")).unwrap().replace(r#""type": "reflect", "target": "server""#, r#""type": "pass""#);
    let without = std::fs::read_to_string(base.join("reflect_without_mitm.json")).unwrap();
    let with = Scenario::from_json(&with, Some(&base)).unwrap();
    let without = Scenario::from_json(&without, Some(&base)).unwrap();
    let sut = Sut::Builtin(Variant::Conforming);
    let a = with.run(&sut, 5, 0, ClockMode::Virtual).unwrap();
    let b = without.run(&sut, 5, 0, ClockMode::Virtual).unwrap();
    assert!(!traffic(&a).is_empty());
    assert_eq!(traffic(&a), traffic(&b));
}
