//! Seeded randomized constraint solver over bounded byte strings and
//! unsigned integers.
//!
//! Each attempt commits to one branch of every disjunction, derives length
//! and integer intervals from comparisons against constants, samples inside
//! those intervals, fills bytes uniformly, then writes the bytes demanded by
//! indexed comparisons and existential witnesses. Universals (negated
//! existentials) are repaired by overwriting a matching byte. The candidate is
//! returned only after every input constraint evaluates to true on it, so a
//! returned assignment is always sound; `Unsat` only means "not found".
//!
//! Randomness comes from ChaCha8 seeded with the 64-bit seed. `solve` uses
//! stream 0; slot `i` of `sample_many` uses stream `i + 1`, so slots are
//! independent of each other and of evaluation order.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::spec::{
    eval_int, evaluate, evaluate_with, Access, ArithOp, CmpOp, EvalError, FieldPath, FieldType, KindSchema, Predicate, Subject, Term,
    Value, WIRE_MAX_LEN,
};

pub const DEFAULT_MAX_TRIES: u32 = 64;
pub const DEFAULT_MAX_LEN: u32 = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    ByteString { max_len: u32 },
    UnsignedInt { bits: u8 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Domain {
    pub field: String,
    pub kind: DomainKind,
}

impl Domain {
    pub fn bytes(field: impl Into<String>, max_len: u32) -> Domain {
        Domain { field: field.into(), kind: DomainKind::ByteString { max_len } }
    }

    pub fn uint(field: impl Into<String>, bits: u8) -> Domain {
        Domain { field: field.into(), kind: DomainKind::UnsignedInt { bits } }
    }

    fn is_valid(&self) -> bool {
        match self.kind {
            DomainKind::ByteString { max_len } => (1..=WIRE_MAX_LEN).contains(&max_len),
            DomainKind::UnsignedInt { bits } => matches!(bits, 8 | 16 | 32 | 64),
        }
    }
}

/// Domains for every field of a schema kind.
pub fn domains_for(schema: &KindSchema) -> Vec<Domain> {
    schema
        .fields
        .iter()
        .map(|f| match f.ty {
            FieldType::Bytes { max_len } => Domain::bytes(&f.name, max_len),
            FieldType::UInt { bits } => Domain::uint(&f.name, bits),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Assignment {
    pub bindings: BTreeMap<String, Value>,
}

impl Assignment {
    pub fn into_subject(self, kind: impl Into<String>) -> Subject {
        Subject { kind: kind.into(), fields: self.bindings }
    }

    pub fn bytes(&self, field: &str) -> Option<&[u8]> {
        match self.bindings.get(field) {
            Some(Value::Bytes(b)) => Some(b),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SolveError {
    #[error("no domain for field `{0}`")]
    MissingDomain(String),
    #[error("invalid domain for field `{0}`")]
    InvalidDomain(String),
    #[error("constraint cannot be evaluated: {0}")]
    Eval(#[from] EvalError),
    #[error("no satisfying assignment found in {tries} tries")]
    Unsat { tries: u32 },
}

/// Finds an assignment satisfying every constraint.
pub fn solve(constraints: &[Predicate], domains: &[Domain], seed: u64, max_tries: u32) -> Result<Assignment, SolveError> {
    let problem = Problem::new(constraints, domains)?;
    problem.run(stream(seed, 0), max_tries)
}

/// `n` independently seeded solutions. Configuration errors fail the whole
/// call; unsatisfied slots are reported in place.
pub fn sample_many(constraints: &[Predicate], domains: &[Domain], seed: u64, n: usize) -> Result<Vec<Result<Assignment, SolveError>>, SolveError> {
    let problem = Problem::new(constraints, domains)?;
    Ok((0..n).map(|i| problem.run(stream(seed, i as u64 + 1), DEFAULT_MAX_TRIES)).collect())
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

struct Problem<'a> {
    constraints: &'a [Predicate],
    /// Conjunction of the constraints in negation normal form.
    nnf: Nnf,
    domains: BTreeMap<String, DomainKind>,
}

/// Negation normal form. `Forall` is a negated existential: the body must
/// fail for every index in range.
#[derive(Debug, Clone)]
enum Nnf {
    Bool(bool),
    Cmp(CmpOp, Term, Term),
    And(Vec<Nnf>),
    Or(Vec<Nnf>),
    Exists { var: String, inclusive: bool, upper: Term, body: Box<Nnf> },
    Forall { var: String, inclusive: bool, upper: Term, body: Predicate },
}

fn nnf(p: &Predicate, positive: bool) -> Nnf {
    match p {
        Predicate::Bool(b) => Nnf::Bool(*b == positive),
        Predicate::Cmp { op, lhs, rhs } => Nnf::Cmp(if positive { *op } else { op.negate() }, lhs.clone(), rhs.clone()),
        Predicate::Not(a) => nnf(a, !positive),
        Predicate::And(a, b) if positive => Nnf::And(vec![nnf(a, true), nnf(b, true)]),
        Predicate::And(a, b) => Nnf::Or(vec![nnf(a, false), nnf(b, false)]),
        Predicate::Or(a, b) if positive => Nnf::Or(vec![nnf(a, true), nnf(b, true)]),
        Predicate::Or(a, b) => Nnf::And(vec![nnf(a, false), nnf(b, false)]),
        Predicate::ExistsIndex { var, inclusive, upper, body } if positive => {
            Nnf::Exists { var: var.clone(), inclusive: *inclusive, upper: upper.clone(), body: Box::new(nnf(body, true)) }
        }
        Predicate::ExistsIndex { var, inclusive, upper, body } => {
            Nnf::Forall { var: var.clone(), inclusive: *inclusive, upper: upper.clone(), body: (**body).clone() }
        }
    }
}

/// One literal of a chosen branch.
enum Atom<'n> {
    Cmp(CmpOp, &'n Term, &'n Term),
    Exists { var: &'n str, inclusive: bool, upper: &'n Term, body: &'n Nnf },
    Forall { var: &'n str, inclusive: bool, upper: &'n Term, body: &'n Predicate },
}

/// Picks a random branch of every disjunction; `false` if the branch hits a
/// literal `false`.
fn pick<'n>(n: &'n Nnf, rng: &mut ChaCha8Rng, out: &mut Vec<Atom<'n>>) -> bool {
    match n {
        Nnf::Bool(b) => *b,
        Nnf::Cmp(op, l, r) => {
            out.push(Atom::Cmp(*op, l, r));
            true
        }
        Nnf::And(xs) => xs.iter().all(|x| pick(x, rng, out)),
        Nnf::Or(xs) => pick(&xs[rng.gen_range(0..xs.len())], rng, out),
        Nnf::Exists { var, inclusive, upper, body } => {
            out.push(Atom::Exists { var, inclusive: *inclusive, upper, body });
            true
        }
        Nnf::Forall { var, inclusive, upper, body } => {
            out.push(Atom::Forall { var, inclusive: *inclusive, upper, body });
            true
        }
    }
}

/// `sign * x + offset` where `x` is a field length or integer field.
#[derive(Debug, Clone)]
struct Lin {
    var: Option<(String, bool)>,
    sign: i128,
    offset: i128,
}

/// Linear form of a term with at most one field (coefficient ±1). Index
/// accesses and bound variables are not linearised.
fn linear(t: &Term) -> Option<Lin> {
    match t {
        Term::Int(v) => Some(Lin { var: None, sign: 0, offset: *v as i128 }),
        Term::Field(FieldPath { field, access: Access::End }) => Some(Lin { var: Some((field.clone(), true)), sign: 1, offset: 0 }),
        Term::Field(FieldPath { field, access: Access::Whole }) => Some(Lin { var: Some((field.clone(), false)), sign: 1, offset: 0 }),
        Term::Arith(op, a, b) => {
            let (a, b) = (linear(a)?, linear(b)?);
            let s = if *op == ArithOp::Add { 1 } else { -1 };
            match (a.var, b.var) {
                (Some(_), Some(_)) => None,
                (var @ Some(_), None) => Some(Lin { var, sign: a.sign, offset: a.offset + s * b.offset }),
                (None, var @ Some(_)) => Some(Lin { var, sign: s * b.sign, offset: a.offset + s * b.offset }),
                (None, None) => Some(Lin { var: None, sign: 0, offset: a.offset + s * b.offset }),
            }
        }
        _ => None,
    }
}

/// Allowed values of one length or integer variable.
#[derive(Debug, Clone)]
struct Range {
    lo: i128,
    hi: i128,
    excluded: BTreeSet<i128>,
}

impl Range {
    fn new(hi: i128) -> Range {
        Range { lo: 0, hi, excluded: BTreeSet::new() }
    }

    fn apply(&mut self, op: CmpOp, k: i128) {
        match op {
            CmpOp::Eq => {
                self.lo = self.lo.max(k);
                self.hi = self.hi.min(k);
            }
            CmpOp::Neq => {
                self.excluded.insert(k);
            }
            CmpOp::Lt => self.hi = self.hi.min(k - 1),
            CmpOp::Le => self.hi = self.hi.min(k),
            CmpOp::Gt => self.lo = self.lo.max(k + 1),
            CmpOp::Ge => self.lo = self.lo.max(k),
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Option<i128> {
        if self.lo > self.hi {
            return None;
        }
        for _ in 0..16 {
            let v = rng.gen_range(self.lo..=self.hi);
            if !self.excluded.contains(&v) {
                return Some(v);
            }
        }
        (self.lo..=self.hi).take(1024).find(|v| !self.excluded.contains(v))
    }
}

/// Constant value of an index expression, if it has no fields or variables
/// beyond those bound in `vars`.
fn const_index(t: &Term, vars: &[(String, i128)]) -> Option<i128> {
    match t {
        Term::Int(v) => Some(*v as i128),
        Term::Var(v) => vars.iter().rev().find(|(n, _)| n == v).map(|(_, x)| *x),
        Term::Arith(op, a, b) => {
            let (a, b) = (const_index(a, vars)?, const_index(b, vars)?);
            Some(if *op == ArithOp::Add { a + b } else { a - b })
        }
        _ => None,
    }
}

fn const_access(t: &Term) -> Option<(String, i128)> {
    match t {
        Term::Field(FieldPath { field, access: Access::Index(at) }) => Some((field.clone(), const_index(at, &[])?)),
        _ => None,
    }
}

/// A `field.value(i) op byte` literal.
struct ByteAtom {
    field: String,
    index: i128,
    op: CmpOp,
    byte: u8,
}

fn byte_atom(op: CmpOp, l: &Term, r: &Term, vars: &[(String, i128)], subject: Option<&Subject>) -> Option<ByteAtom> {
    let index_of = |t: &Term| match t {
        Term::Field(FieldPath { field, access: Access::Index(at) }) => {
            let i = const_index(at, vars).or_else(|| subject.and_then(|s| eval_int(at, s, vars).ok()))?;
            Some((field.clone(), i))
        }
        _ => None,
    };
    let byte_of = |t: &Term| match t {
        Term::Int(v) if *v <= 0xff => Some(*v as u8),
        _ => None,
    };
    if let (Some((field, index)), Some(byte)) = (index_of(l), byte_of(r)) {
        return Some(ByteAtom { field, index, op, byte });
    }
    if let (Some(byte), Some((field, index))) = (byte_of(l), index_of(r)) {
        return Some(ByteAtom { field, index, op: op.flip(), byte });
    }
    None
}

/// Largest constant offset `k` in `var + k` indices of a body.
fn max_offset(body: &Nnf, var: &str) -> i128 {
    let mut best = 0;
    fn walk(n: &Nnf, var: &str, best: &mut i128) {
        match n {
            Nnf::Cmp(_, l, r) => {
                for t in [l, r] {
                    if let Term::Field(FieldPath { access: Access::Index(at), .. }) = t {
                        if at.mentions_var(var) {
                            if let Some(k) = const_index(at, &[(var.to_string(), 0)]) {
                                *best = (*best).max(k);
                            }
                        }
                    }
                }
            }
            Nnf::And(xs) | Nnf::Or(xs) => xs.iter().for_each(|x| walk(x, var, best)),
            Nnf::Exists { body, .. } => walk(body, var, best),
            Nnf::Bool(_) | Nnf::Forall { .. } => {}
        }
    }
    walk(body, var, &mut best);
    best
}

fn allowed_byte(constraints: &[(CmpOp, u8)], rng: &mut ChaCha8Rng) -> Option<u8> {
    let ok = |b: u8| constraints.iter().all(|(op, k)| op.holds(b, *k));
    if let Some((_, k)) = constraints.iter().find(|(op, _)| *op == CmpOp::Eq) {
        return ok(*k).then_some(*k);
    }
    for _ in 0..8 {
        let b: u8 = rng.gen();
        if ok(b) {
            return Some(b);
        }
    }
    let choices: Vec<u8> = (0..=255u8).filter(|b| ok(*b)).collect();
    (!choices.is_empty()).then(|| choices[rng.gen_range(0..choices.len())])
}

impl<'a> Problem<'a> {
    fn new(constraints: &'a [Predicate], domains: &[Domain]) -> Result<Problem<'a>, SolveError> {
        let mut map = BTreeMap::new();
        for d in domains {
            if !d.is_valid() {
                return Err(SolveError::InvalidDomain(d.field.clone()));
            }
            map.insert(d.field.clone(), d.kind);
        }
        for c in constraints {
            if let Some(f) = c.fields().into_iter().find(|f| !map.contains_key(f)) {
                return Err(SolveError::MissingDomain(f));
            }
        }
        let nnf = Nnf::And(constraints.iter().map(|c| nnf(c, true)).collect());
        Ok(Problem { constraints, nnf, domains: map })
    }

    fn run(&self, mut rng: ChaCha8Rng, max_tries: u32) -> Result<Assignment, SolveError> {
        for _ in 0..max_tries.max(1) {
            if let Some(subject) = self.attempt(&mut rng) {
                let mut ok = true;
                for c in self.constraints {
                    if !evaluate(c, &subject)? {
                        ok = false;
                    }
                }
                if ok {
                    return Ok(Assignment { bindings: subject.fields });
                }
            }
        }
        Err(SolveError::Unsat { tries: max_tries.max(1) })
    }

    fn max_len(&self, field: &str) -> i128 {
        match self.domains[field] {
            DomainKind::ByteString { max_len } => max_len.min(WIRE_MAX_LEN) as i128,
            DomainKind::UnsignedInt { .. } => 0,
        }
    }

    fn attempt(&self, rng: &mut ChaCha8Rng) -> Option<Subject> {
        let mut atoms = Vec::new();
        if !pick(&self.nnf, rng, &mut atoms) {
            return None;
        }

        let mut ranges: BTreeMap<&str, Range> = BTreeMap::new();
        for (name, kind) in &self.domains {
            let hi = match *kind {
                DomainKind::ByteString { .. } => self.max_len(name),
                DomainKind::UnsignedInt { bits } => ((1u128 << bits) - 1) as i128,
            };
            ranges.insert(name, Range::new(hi));
        }
        let mut whole: BTreeMap<String, &[u8]> = BTreeMap::new();
        let mut not_whole: Vec<(String, &[u8])> = Vec::new();
        let mut bytes: BTreeMap<(String, i128), Vec<(CmpOp, u8)>> = BTreeMap::new();
        let mut copies: Vec<(String, i128, String, i128)> = Vec::new();

        for atom in &atoms {
            match atom {
                Atom::Cmp(op, l, r) => {
                    if let (Some(a), Some(b)) = (linear(l), linear(r)) {
                        // sign_a*x + off_a  op  sign_b*y + off_b, with one side constant
                        let (var, sign, k, op) = match (a.var, b.var) {
                            (Some(v), None) => (v, a.sign, b.offset - a.offset, *op),
                            (None, Some(v)) => (v, b.sign, a.offset - b.offset, op.flip()),
                            _ => continue,
                        };
                        let (op, k) = if sign < 0 { (op.flip(), -k) } else { (op, k) };
                        if let Some(r) = ranges.get_mut(var.0.as_str()) {
                            r.apply(op, k);
                        }
                        continue;
                    }
                    match (l, r) {
                        (Term::Field(FieldPath { field, access: Access::Whole }), Term::Bytes(b))
                        | (Term::Bytes(b), Term::Field(FieldPath { field, access: Access::Whole })) => {
                            if *op == CmpOp::Eq {
                                if whole.get(field).is_some_and(|prev| *prev != b.as_slice()) {
                                    return None;
                                }
                                whole.insert(field.clone(), b);
                                ranges.get_mut(field.as_str())?.apply(CmpOp::Eq, b.len() as i128);
                            } else {
                                not_whole.push((field.clone(), b));
                            }
                            continue;
                        }
                        _ => {}
                    }
                    if let (CmpOp::Eq, Some((fa, ia)), Some((fb, ib))) = (op, const_access(l), const_access(r)) {
                        if ia < 0 || ib < 0 {
                            return None;
                        }
                        ranges.get_mut(fa.as_str())?.apply(CmpOp::Gt, ia);
                        ranges.get_mut(fb.as_str())?.apply(CmpOp::Gt, ib);
                        copies.push((fa, ia, fb, ib));
                        continue;
                    }
                    if let Some(b) = byte_atom(*op, l, r, &[], None) {
                        if b.index < 0 {
                            return None;
                        }
                        ranges.get_mut(b.field.as_str())?.apply(CmpOp::Gt, b.index);
                        bytes.entry((b.field, b.index)).or_default().push((b.op, b.byte));
                    }
                }
                Atom::Exists { var, inclusive, upper, body } => {
                    // The witness needs a non-empty range and room for the body's reads.
                    let reach = max_offset(body, var);
                    for (_, field, _) in body_byte_fields(body) {
                        ranges.get_mut(field.as_str())?.apply(CmpOp::Gt, reach);
                    }
                    if let Some(Lin { var: Some((f, true)), sign: 1, offset }) = linear(upper) {
                        let need = if *inclusive { -offset } else { 1 - offset };
                        ranges.get_mut(f.as_str())?.apply(CmpOp::Ge, need);
                    }
                }
                Atom::Forall { .. } => {}
            }
        }

        let mut subject = Subject::new("candidate");
        for (name, kind) in &self.domains {
            let v = ranges[name.as_str()].sample(rng)?;
            let value = match kind {
                DomainKind::UnsignedInt { .. } => Value::Int(v as u64),
                DomainKind::ByteString { .. } => Value::Bytes(match whole.get(name) {
                    Some(b) => b.to_vec(),
                    None => (0..v).map(|_| rng.gen()).collect(),
                }),
            };
            subject.fields.insert(name.clone(), value);
        }

        for ((field, index), cs) in &bytes {
            let b = allowed_byte(cs, rng)?;
            set_byte(&mut subject, field, *index, b);
        }

        for (fa, ia, fb, ib) in &copies {
            let b = subject.bytes(fa)?[*ia as usize];
            set_byte(&mut subject, fb, *ib, b);
        }

        for atom in &atoms {
            if let Atom::Exists { var, inclusive, upper, body } = atom {
                let mut end = eval_int(upper, &subject, &[]).ok()?;
                if *inclusive {
                    end += 1;
                }
                if end <= 0 {
                    return None;
                }
                let witness = rng.gen_range(0..end.min(crate::spec::MAX_INDEX_SCAN));
                let vars = [(var.to_string(), witness)];
                let mut body_atoms = Vec::new();
                if !pick(body, rng, &mut body_atoms) {
                    return None;
                }
                let mut wanted: BTreeMap<(String, i128), Vec<(CmpOp, u8)>> = BTreeMap::new();
                for a in &body_atoms {
                    if let Atom::Cmp(op, l, r) = a {
                        if let Some(b) = byte_atom(*op, l, r, &vars, Some(&subject)) {
                            wanted.entry((b.field, b.index)).or_default().push((b.op, b.byte));
                        }
                    }
                }
                for ((field, index), cs) in &wanted {
                    let b = allowed_byte(cs, rng)?;
                    set_byte(&mut subject, field, *index, b);
                }
            }
        }

        for (field, lit) in &not_whole {
            if subject.bytes(field) == Some(lit) {
                let Some(Value::Bytes(b)) = subject.fields.get_mut(field) else { return None };
                if b.is_empty() {
                    return None;
                }
                let i = rng.gen_range(0..b.len());
                b[i] = b[i].wrapping_add(rng.gen_range(1..=255));
            }
        }

        for atom in &atoms {
            if let Atom::Forall { var, inclusive, upper, body } = atom {
                repair_forall(&mut subject, var, *inclusive, upper, body, rng)?;
            }
        }
        Some(subject)
    }
}

/// `(op, field, index term)` of every indexed byte read in a body.
fn body_byte_fields(body: &Nnf) -> Vec<(CmpOp, String, Term)> {
    let mut out = Vec::new();
    fn walk(n: &Nnf, out: &mut Vec<(CmpOp, String, Term)>) {
        match n {
            Nnf::Cmp(op, l, r) => {
                for t in [l, r] {
                    if let Term::Field(FieldPath { field, access: Access::Index(at) }) = t {
                        out.push((*op, field.clone(), (**at).clone()));
                    }
                }
            }
            Nnf::And(xs) | Nnf::Or(xs) => xs.iter().for_each(|x| walk(x, out)),
            Nnf::Exists { body, .. } => walk(body, out),
            Nnf::Bool(_) | Nnf::Forall { .. } => {}
        }
    }
    walk(body, &mut out);
    out
}

fn set_byte(subject: &mut Subject, field: &str, index: i128, b: u8) {
    if let Some(Value::Bytes(bytes)) = subject.fields.get_mut(field) {
        if let Some(slot) = usize::try_from(index).ok().and_then(|i| bytes.get_mut(i)) {
            *slot = b;
        }
    }
}

/// Makes `body` false for every index in range by overwriting one byte it
/// reads whenever it holds.
fn repair_forall(subject: &mut Subject, var: &str, inclusive: bool, upper: &Term, body: &Predicate, rng: &mut ChaCha8Rng) -> Option<()> {
    let nbody = nnf(body, true);
    let reads = body_byte_fields(&nbody);
    for _pass in 0..4 {
        let mut end = eval_int(upper, subject, &[]).ok()?;
        if inclusive {
            end += 1;
        }
        let end = end.min(crate::spec::MAX_INDEX_SCAN);
        let mut changed = false;
        for i in 0..end.max(0) {
            let vars = [(var.to_string(), i)];
            if !evaluate_with(body, subject, &vars).ok()? {
                continue;
            }
            let targets: Vec<(String, i128)> = reads
                .iter()
                .filter_map(|(_, f, at)| Some((f.clone(), eval_int(at, subject, &vars).ok()?)))
                .filter(|(f, idx)| subject.bytes(f).is_some_and(|b| *idx >= 0 && (*idx as usize) < b.len()))
                .collect();
            if targets.is_empty() {
                return None;
            }
            let (f, idx) = &targets[rng.gen_range(0..targets.len())];
            let old = subject.bytes(f)?[*idx as usize];
            set_byte(subject, f, *idx, old.wrapping_add(rng.gen_range(1..=255)));
            changed = true;
        }
        if !changed {
            return Some(());
        }
    }
    Some(())
}
