use proptest::prelude::*;
use protomut::attacker::{screen, AttackerModel, Screening, Vector};
use protomut::mutation::{self, diff, enumerate, MutationKind};
use protomut::protocol::{self, Role};
use protomut::spec::ProtocolSpec;

fn minip_spec() -> &'static ProtocolSpec {
    &protocol::minip().spec
}

#[test]
fn every_mutant_is_a_single_valid_change() {
    for kind in MutationKind::ALL {
        let e = enumerate(minip_spec(), &[kind], 1, usize::MAX);
        assert!(!e.mutants.is_empty(), "{kind:?} produced nothing");
        for m in &e.mutants {
            assert_eq!(m.lineage.op.kind(), kind);
            assert_eq!(diff(minip_spec(), &m.spec).len(), 1, "{}", m.id);
            assert_eq!(ProtocolSpec::from_text(&m.text()).as_ref(), Ok(&m.spec), "{}", m.id);
        }
    }
}

#[test]
fn shipped_maxip_spec_mutates_too() {
    let e = enumerate(&protocol::maxip().spec, &MutationKind::ALL, 4, 40);
    assert!(!e.mutants.is_empty());
    for m in &e.mutants {
        assert_eq!(diff(&protocol::maxip().spec, &m.spec).len(), 1);
    }
}

#[test]
fn lineage_reapplies_to_the_same_mutant() {
    for m in enumerate(minip_spec(), &MutationKind::ALL, 9, 30).mutants {
        assert_eq!(m.lineage.source_id, mutation::spec_id(minip_spec()));
        let again = mutation::apply_seeded(minip_spec(), &m.lineage.op, m.lineage.seed).unwrap();
        assert_eq!(again, m);
    }
}

/// Every mutant a client attack can be built from is screened: it either
/// yields a packet the original spec rejects or is flagged.
#[test]
fn mutants_are_screened_never_silently_kept() {
    let (mut distinct, mut flagged) = (0, 0);
    for m in enumerate(minip_spec(), &MutationKind::ALL, 2, 24).mutants {
        let model = AttackerModel::new(Vector::MaliciousClient, protocol::minip(), minip_spec(), Some(m), &[], None).unwrap();
        let Ok(plan) = model.plan(Role::Client, 0) else { continue };
        match screen(&plan, minip_spec(), 0, 32) {
            Screening::Distinct => distinct += 1,
            Screening::PossiblyEquivalent => flagged += 1,
        }
    }
    assert!(distinct > 0 && flagged > 0, "distinct {distinct} flagged {flagged}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn enumeration_is_reproducible(seed in any::<u64>(), limit in 1usize..40) {
        let a = enumerate(minip_spec(), &MutationKind::ALL, seed, limit);
        let b = enumerate(minip_spec(), &MutationKind::ALL, seed, limit);
        prop_assert!(a.mutants.len() <= limit);
        prop_assert_eq!(a, b);
    }
}
