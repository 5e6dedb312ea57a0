mod common;

use proptest::prelude::*;
use protomut::solver::{sample_many, solve, Domain, DEFAULT_MAX_TRIES};
use protomut::spec::{evaluate, parse_predicate, Value};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn soundness_over_a_thousand_random_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let domains = common::domains();
    let mut solved = 0;
    for seed in 0..1000 {
        let set = common::constraint_set(&mut rng);
        if let Ok(a) = solve(&set, &domains, seed, DEFAULT_MAX_TRIES) {
            solved += 1;
            let s = a.into_subject("frame");
            for p in &set {
                assert_eq!(evaluate(p, &s), Ok(true), "unsound for {p:?}");
            }
        }
    }
    // the grammar is mostly satisfiable; a solver that gives up on everything is useless
    assert!(solved > 500, "only {solved} of 1000 solved");
}

#[test]
fn under_constrained_sets_vary_with_the_seed() {
    let set = [parse_predicate("f.data.end > 3 & f.data.end < 40").unwrap()];
    let d = [Domain::bytes("data", 64)];
    let distinct: std::collections::BTreeSet<Vec<u8>> =
        (0..10).map(|s| solve(&set, &d, s, DEFAULT_MAX_TRIES).unwrap().bytes("data").unwrap().to_vec()).collect();
    assert!(distinct.len() >= 2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn identical_inputs_give_identical_samples(gen in any::<u64>(), seed in any::<u64>()) {
        let set = common::constraint_set(&mut ChaCha8Rng::seed_from_u64(gen));
        let d = common::domains();
        prop_assert_eq!(sample_many(&set, &d, seed, 4), sample_many(&set, &d, seed, 4));
        prop_assert_eq!(solve(&set, &d, seed, 8), solve(&set, &d, seed, 8));
    }

    #[test]
    fn values_stay_inside_their_domains(gen in any::<u64>(), seed in any::<u64>()) {
        let set = common::constraint_set(&mut ChaCha8Rng::seed_from_u64(gen));
        if let Ok(a) = solve(&set, &common::domains(), seed, 8) {
            for (field, v) in &a.bindings {
                match (field.as_str(), v) {
                    ("data", Value::Bytes(b)) => prop_assert!(b.len() <= common::DATA_MAX as usize),
                    ("tag", Value::Bytes(b)) => prop_assert!(b.len() <= 4),
                    ("n", Value::Int(i)) => prop_assert!(*i <= u64::from(u16::MAX)),
                    ("m", Value::Int(i)) => prop_assert!(*i <= 255),
                    other => prop_assert!(false, "unexpected binding {:?}", other),
                }
            }
        }
    }
}
