//! Random predicates and subjects drawn from the closed requirement grammar.
#![allow(dead_code)]

pub mod net;

use protomut::solver::{domains_for, Domain};
use protomut::spec::{CmpOp, FieldDecl, FieldPath, FieldType, KindSchema, Predicate, Subject, Term, Value};
use rand::Rng;

pub const DATA_MAX: u32 = 48;

pub fn schema() -> KindSchema {
    KindSchema {
        kind: "frame".into(),
        fields: vec![
            FieldDecl { name: "data".into(), ty: FieldType::Bytes { max_len: DATA_MAX } },
            FieldDecl { name: "tag".into(), ty: FieldType::Bytes { max_len: 4 } },
            FieldDecl { name: "n".into(), ty: FieldType::UInt { bits: 16 } },
            FieldDecl { name: "m".into(), ty: FieldType::UInt { bits: 8 } },
        ],
    }
}

pub fn domains() -> Vec<Domain> {
    domains_for(&schema())
}

fn op(rng: &mut impl Rng) -> CmpOp {
    [CmpOp::Eq, CmpOp::Neq, CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge][rng.gen_range(0..6)]
}

fn end(f: &str) -> Term {
    Term::Field(FieldPath::end(f))
}

fn small_bytes(rng: &mut impl Rng, max: usize) -> Vec<u8> {
    let n = rng.gen_range(0..=max);
    (0..n).map(|_| rng.gen_range(0..4u8) * 0x40).collect()
}

fn leaf(rng: &mut impl Rng) -> Predicate {
    match rng.gen_range(0..8) {
        0 => Predicate::cmp(op(rng), end("data"), Term::Int(rng.gen_range(0..=DATA_MAX as u64 + 4))),
        1 => Predicate::cmp(op(rng), Term::sub(end("data"), Term::Int(rng.gen_range(0..10))), Term::Int(rng.gen_range(0..40))),
        2 => Predicate::cmp(op(rng), Term::Field(FieldPath::whole("n")), Term::Int(rng.gen_range(0..70_000))),
        3 => Predicate::cmp(op(rng), Term::Int(rng.gen_range(0..300)), Term::Field(FieldPath::whole("m"))),
        4 => Predicate::cmp(
            op(rng),
            Term::Field(FieldPath::index("data", Term::Int(rng.gen_range(0..DATA_MAX as u64)))),
            Term::Int(rng.gen_range(0..=255)),
        ),
        5 => Predicate::cmp(
            if rng.gen() { CmpOp::Eq } else { CmpOp::Neq },
            Term::Field(FieldPath::whole("tag")),
            Term::Bytes(small_bytes(rng, 4)),
        ),
        6 => Predicate::Bool(rng.gen_bool(0.8)),
        _ => Predicate::cmp(op(rng), end("tag"), Term::Int(rng.gen_range(0..6))),
    }
}

fn exists(rng: &mut impl Rng) -> Predicate {
    let width = rng.gen_range(1..=4u64);
    let mut body = Vec::new();
    for j in 0..width {
        let at = if j == 0 { Term::Var("I".into()) } else { Term::add(Term::Var("I".into()), Term::Int(j)) };
        body.push(Predicate::cmp(
            if rng.gen_bool(0.8) { CmpOp::Eq } else { op(rng) },
            Term::Field(FieldPath::index("data", at)),
            Term::Int(rng.gen_range(0..=255)),
        ));
    }
    let upper = if rng.gen() { Term::sub(end("data"), Term::Int(rng.gen_range(0..8))) } else { end("data") };
    Predicate::ExistsIndex { var: "I".into(), inclusive: rng.gen_bool(0.2), upper, body: Box::new(Predicate::all(body)) }
}

pub fn predicate(rng: &mut impl Rng, depth: u32) -> Predicate {
    if depth == 0 {
        return if rng.gen_bool(0.15) { exists(rng) } else { leaf(rng) };
    }
    match rng.gen_range(0..6) {
        0 => Predicate::and(predicate(rng, depth - 1), predicate(rng, depth - 1)),
        1 => Predicate::or(predicate(rng, depth - 1), predicate(rng, depth - 1)),
        2 => Predicate::not(predicate(rng, depth - 1)),
        3 => exists(rng),
        _ => leaf(rng),
    }
}

/// A constraint set of 1..=4 predicates.
pub fn constraint_set(rng: &mut impl Rng) -> Vec<Predicate> {
    let n = rng.gen_range(1..=4);
    (0..n)
        .map(|_| {
            let depth = rng.gen_range(0..3);
            predicate(rng, depth)
        })
        .collect()
}

pub fn subject(rng: &mut impl Rng, max_len: usize) -> Subject {
    let len = rng.gen_range(0..=max_len);
    let data: Vec<u8> = (0..len).map(|_| if rng.gen_bool(0.3) { [0x00, 0x25, 0x40, 0x6e, 0x78][rng.gen_range(0..5)] } else { rng.gen() }).collect();
    Subject::new("frame")
        .with("data", Value::Bytes(data))
        .with("tag", Value::Bytes(small_bytes(rng, 4)))
        .with("n", Value::Int(rng.gen_range(0..=u16::MAX as u64)))
        .with("m", Value::Int(rng.gen_range(0..=255)))
}
