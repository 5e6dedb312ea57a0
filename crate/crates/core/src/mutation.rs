//! Specification mutation operators.
//!
//! Every operator changes exactly one requirement or one schema field of a
//! source spec. Results that break a structural invariant of the spec are
//! rejected as [`MutationError::InvalidMutant`] rather than returned.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::spec::{
    parse_predicate, print_spec, Access, FieldPath, FieldType, Layer, Predicate, ProtocolSpec, SpecError, Term, WIRE_MAX_LEN,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutationKind {
    StatementDeleteOrAdd,
    Negation,
    ValueReplacement,
    BoundaryValue,
    ControlFlow,
    DataStructure,
}

impl MutationKind {
    pub const ALL: [MutationKind; 6] = [
        MutationKind::StatementDeleteOrAdd,
        MutationKind::Negation,
        MutationKind::ValueReplacement,
        MutationKind::BoundaryValue,
        MutationKind::ControlFlow,
        MutationKind::DataStructure,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MutationKind::StatementDeleteOrAdd => "statement_delete_or_add",
            MutationKind::Negation => "negation",
            MutationKind::ValueReplacement => "value_replacement",
            MutationKind::BoundaryValue => "boundary_value",
            MutationKind::ControlFlow => "control_flow",
            MutationKind::DataStructure => "data_structure",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "change")]
pub enum Statement {
    Delete { index: usize },
    /// Inserts `predicate` (surface syntax) before requirement `index`.
    Add {
        index: usize,
        predicate: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        template: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type", content = "value")]
pub enum Literal {
    Int(u64),
    Bytes(#[serde(with = "crate::spec::hex_bytes")] Vec<u8>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Zero,
    One,
    MinusOne,
    PlusOne,
    DomainMax,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "change")]
pub enum Flow {
    /// Exchanges the positions `a` and `b` wherever the requirement indexes
    /// a byte string with a constant.
    Swap { a: u64, b: u64 },
    /// Replaces the conjuncts about position `to` by copies of those about
    /// position `from`.
    Duplicate { from: u64, to: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "change")]
pub enum SchemaChange {
    Width { bits: u8 },
    MaxLen { max_len: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum MutationOp {
    StatementDeleteOrAdd { component: String, statement: Statement },
    Negation { component: String, index: usize },
    /// Replaces the `literal`-th literal (pre-order) of a requirement.
    ValueReplacement { component: String, index: usize, literal: usize, value: Literal },
    BoundaryValue { component: String, index: usize, literal: usize, choice: Boundary },
    ControlFlow { component: String, index: usize, flow: Flow },
    DataStructure { schema_kind: String, field: String, delta: SchemaChange },
}

impl MutationOp {
    pub fn kind(&self) -> MutationKind {
        match self {
            MutationOp::StatementDeleteOrAdd { .. } => MutationKind::StatementDeleteOrAdd,
            MutationOp::Negation { .. } => MutationKind::Negation,
            MutationOp::ValueReplacement { .. } => MutationKind::ValueReplacement,
            MutationOp::BoundaryValue { .. } => MutationKind::BoundaryValue,
            MutationOp::ControlFlow { .. } => MutationKind::ControlFlow,
            MutationOp::DataStructure { .. } => MutationKind::DataStructure,
        }
    }

    /// Component whose requirements the op touches, if any.
    pub fn component(&self) -> Option<&str> {
        match self {
            MutationOp::StatementDeleteOrAdd { component, .. }
            | MutationOp::Negation { component, .. }
            | MutationOp::ValueReplacement { component, .. }
            | MutationOp::BoundaryValue { component, .. }
            | MutationOp::ControlFlow { component, .. } => Some(component),
            MutationOp::DataStructure { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lineage {
    pub source_id: String,
    pub op: MutationOp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mutant {
    pub id: String,
    pub spec: ProtocolSpec,
    pub lineage: Lineage,
}

impl Mutant {
    pub fn text(&self) -> String {
        print_spec(&self.spec)
    }

    /// Requirement the op produced or changed, as `(component, index)`.
    pub fn mutated_requirement(&self) -> Option<(&str, usize)> {
        match &self.lineage.op {
            MutationOp::StatementDeleteOrAdd { component, statement: Statement::Add { index, .. } } => Some((component, *index)),
            MutationOp::StatementDeleteOrAdd { statement: Statement::Delete { .. }, .. } => None,
            MutationOp::Negation { component, index }
            | MutationOp::ValueReplacement { component, index, .. }
            | MutationOp::BoundaryValue { component, index, .. }
            | MutationOp::ControlFlow { component, index, .. } => Some((component, *index)),
            MutationOp::DataStructure { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MutationError {
    #[error("unresolved target: {0}")]
    UnresolvedTarget(String),
    #[error("type clash: {0}")]
    TypeClash(String),
    #[error("invalid mutant: {}", .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidMutant(Vec<SpecError>),
}

fn short_hash(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    hex::encode(h.finalize())[..16].to_string()
}

/// Stable id of a spec: hash of its canonical text.
pub fn spec_id(spec: &ProtocolSpec) -> String {
    short_hash(&[print_spec(spec).as_bytes()])
}

/// Built-in predicates for statement addition, written against a subject
/// named `f`.
pub const TEMPLATES: [(&str, &str); 4] = [
    (
        "format_string",
        "f.data.end < 100000 & exists I. I < f.data.end - 8 & (f.data.value(I) = 0x25 & f.data.value(I+1) = 0x78 \
         & f.data.value(I+2) = 0x25 & f.data.value(I+3) = 0x6e)",
    ),
    ("oversize", "f.data.end > 1024"),
    ("wrong_frame_order", "f.kinds.end = 2 & f.kinds.value(0) = 0x03 & f.kinds.value(1) = 0x01"),
    ("duplicate_frame", "f.kinds.end > 1 & f.kinds.value(1) = f.kinds.value(0)"),
];

pub fn template(name: &str) -> Option<Predicate> {
    TEMPLATES.iter().find(|(n, _)| *n == name).map(|(_, src)| parse_predicate(src).expect("template parses"))
}

fn literals_mut<'a>(p: &'a mut Predicate, out: &mut Vec<&'a mut Term>) {
    fn term<'a>(t: &'a mut Term, out: &mut Vec<&'a mut Term>) {
        match t {
            Term::Int(_) | Term::Bytes(_) => out.push(t),
            Term::Var(_) => {}
            Term::Field(FieldPath { access: Access::Index(at), .. }) => term(at, out),
            Term::Field(_) => {}
            Term::Arith(_, a, b) => {
                term(a, out);
                term(b, out);
            }
        }
    }
    match p {
        Predicate::Bool(_) => {}
        Predicate::Cmp { lhs, rhs, .. } => {
            term(lhs, out);
            term(rhs, out);
        }
        Predicate::And(a, b) | Predicate::Or(a, b) => {
            literals_mut(a, out);
            literals_mut(b, out);
        }
        Predicate::Not(a) => literals_mut(a, out),
        Predicate::ExistsIndex { upper, body, .. } => {
            term(upper, out);
            literals_mut(body, out);
        }
    }
}

fn literals(p: &Predicate) -> Vec<Term> {
    let mut p = p.clone();
    let mut out = Vec::new();
    literals_mut(&mut p, &mut out);
    out.into_iter().map(|t| t.clone()).collect()
}

/// Pre-order numbers of literals compared directly against a `.end`
/// access, with the field they bound.
fn length_literals(p: &Predicate) -> Vec<(usize, String)> {
    let mut out = Vec::new();
    let mut n = 0usize;
    fn count(t: &Term) -> usize {
        match t {
            Term::Int(_) | Term::Bytes(_) => 1,
            Term::Var(_) => 0,
            Term::Field(FieldPath { access: Access::Index(at), .. }) => count(at),
            Term::Field(_) => 0,
            Term::Arith(_, a, b) => count(a) + count(b),
        }
    }
    fn walk(p: &Predicate, n: &mut usize, out: &mut Vec<(usize, String)>) {
        match p {
            Predicate::Bool(_) => {}
            Predicate::Cmp { lhs, rhs, .. } => {
                match (lhs, rhs) {
                    (Term::Field(FieldPath { field, access: Access::End }), Term::Int(_)) => out.push((*n, field.clone())),
                    (Term::Int(_), Term::Field(FieldPath { field, access: Access::End })) => out.push((*n, field.clone())),
                    _ => {}
                }
                *n += count(lhs) + count(rhs);
            }
            Predicate::And(a, b) | Predicate::Or(a, b) => {
                walk(a, n, out);
                walk(b, n, out);
            }
            Predicate::Not(a) => walk(a, n, out),
            Predicate::ExistsIndex { upper, body, .. } => {
                *n += count(upper);
                walk(body, n, out);
            }
        }
    }
    walk(p, &mut n, &mut out);
    out
}

fn conjuncts(p: &Predicate) -> Vec<Predicate> {
    match p {
        Predicate::And(a, b) => {
            let mut v = conjuncts(a);
            v.extend(conjuncts(b));
            v
        }
        other => vec![other.clone()],
    }
}

/// Constant positions a predicate indexes.
fn const_indices(p: &Predicate) -> BTreeSet<u64> {
    let mut out = BTreeSet::new();
    p.visit_fields(&mut |f| {
        if let Access::Index(at) = &f.access {
            if let Term::Int(i) = at.as_ref() {
                out.insert(*i);
            }
        }
    });
    out
}

fn remap_indices(p: &Predicate, map: &dyn Fn(u64) -> u64) -> Predicate {
    fn term(t: &Term, map: &dyn Fn(u64) -> u64) -> Term {
        match t {
            Term::Field(FieldPath { field, access: Access::Index(at) }) => {
                let at = match at.as_ref() {
                    Term::Int(i) => Term::Int(map(*i)),
                    other => term(other, map),
                };
                Term::Field(FieldPath::index(field.clone(), at))
            }
            Term::Arith(op, a, b) => Term::Arith(*op, Box::new(term(a, map)), Box::new(term(b, map))),
            other => other.clone(),
        }
    }
    match p {
        Predicate::Bool(b) => Predicate::Bool(*b),
        Predicate::Cmp { op, lhs, rhs } => Predicate::cmp(*op, term(lhs, map), term(rhs, map)),
        Predicate::And(a, b) => Predicate::and(remap_indices(a, map), remap_indices(b, map)),
        Predicate::Or(a, b) => Predicate::or(remap_indices(a, map), remap_indices(b, map)),
        Predicate::Not(a) => Predicate::not(remap_indices(a, map)),
        Predicate::ExistsIndex { var, inclusive, upper, body } => Predicate::ExistsIndex {
            var: var.clone(),
            inclusive: *inclusive,
            upper: term(upper, map),
            body: Box::new(remap_indices(body, map)),
        },
    }
}

/// Ordering conjuncts of a requirement: each names exactly one position.
fn flow_conjuncts(p: &Predicate) -> Option<Vec<(u64, Predicate)>> {
    let cs = conjuncts(p);
    let mut out = Vec::new();
    for c in cs {
        let idx = const_indices(&c);
        if idx.len() != 1 {
            return None;
        }
        out.push((*idx.iter().next().unwrap(), c));
    }
    let positions: BTreeSet<u64> = out.iter().map(|(i, _)| *i).collect();
    (positions.len() >= 2).then_some(out)
}

fn apply_flow(p: &Predicate, flow: &Flow) -> Option<Predicate> {
    match *flow {
        Flow::Swap { a, b } => {
            let idx = const_indices(p);
            if a == b || !idx.contains(&a) || !idx.contains(&b) {
                return None;
            }
            Some(remap_indices(p, &|i| if i == a { b } else if i == b { a } else { i }))
        }
        Flow::Duplicate { from, to } => {
            let cs = flow_conjuncts(p)?;
            if from == to || !cs.iter().any(|(i, _)| *i == from) || !cs.iter().any(|(i, _)| *i == to) {
                return None;
            }
            let mut out = Vec::new();
            let mut placed = false;
            for (i, c) in &cs {
                if *i != to {
                    out.push(c.clone());
                } else if !placed {
                    placed = true;
                    for (j, d) in &cs {
                        if *j == from {
                            out.push(remap_indices(d, &|k| if k == from { to } else { k }));
                        }
                    }
                }
            }
            Some(Predicate::all(out))
        }
    }
}

fn requirement<'a>(spec: &'a ProtocolSpec, component: &str, index: usize) -> Result<&'a Predicate, MutationError> {
    let c = spec.component(component).ok_or_else(|| MutationError::UnresolvedTarget(format!("component `{component}`")))?;
    c.requirements
        .get(index)
        .ok_or_else(|| MutationError::UnresolvedTarget(format!("requirement #{} of `{component}`", index + 1)))
}

/// Applies one mutation operator to `spec`.
pub fn apply(spec: &ProtocolSpec, op: &MutationOp) -> Result<Mutant, MutationError> {
    apply_seeded(spec, op, None)
}

pub fn apply_seeded(spec: &ProtocolSpec, op: &MutationOp, seed: Option<u64>) -> Result<Mutant, MutationError> {
    let mut out = spec.clone();
    match op {
        MutationOp::StatementDeleteOrAdd { component, statement } => {
            let c = out.component_mut(component).ok_or_else(|| MutationError::UnresolvedTarget(format!("component `{component}`")))?;
            match statement {
                Statement::Delete { index } => {
                    if *index >= c.requirements.len() {
                        return Err(MutationError::UnresolvedTarget(format!("requirement #{} of `{component}`", index + 1)));
                    }
                    c.requirements.remove(*index);
                }
                Statement::Add { index, predicate, .. } => {
                    if *index > c.requirements.len() {
                        return Err(MutationError::UnresolvedTarget(format!("position {index} of `{component}`")));
                    }
                    let p = parse_predicate(predicate).map_err(|e| MutationError::InvalidMutant(vec![SpecError::Parse(e)]))?;
                    c.requirements.insert(*index, p);
                }
            }
        }
        MutationOp::Negation { component, index } => {
            let p = requirement(spec, component, *index)?.clone();
            out.component_mut(component).unwrap().requirements[*index] = Predicate::not(p);
        }
        MutationOp::ValueReplacement { component, index, literal, value } => {
            let mut p = requirement(spec, component, *index)?.clone();
            let mut lits = Vec::new();
            literals_mut(&mut p, &mut lits);
            let slot = lits
                .into_iter()
                .nth(*literal)
                .ok_or_else(|| MutationError::UnresolvedTarget(format!("literal #{literal} of `{component}` requirement #{}", index + 1)))?;
            match (&*slot, value) {
                (Term::Int(_), Literal::Int(v)) => *slot = Term::Int(*v),
                (Term::Bytes(_), Literal::Bytes(b)) => *slot = Term::Bytes(b.clone()),
                (found, _) => return Err(MutationError::TypeClash(format!("cannot replace {found:?} with {value:?}"))),
            }
            out.component_mut(component).unwrap().requirements[*index] = p;
        }
        MutationOp::BoundaryValue { component, index, literal, choice } => {
            let mut p = requirement(spec, component, *index)?.clone();
            let kind = &spec.component(component).unwrap().kind;
            let (_, field) = length_literals(&p)
                .into_iter()
                .find(|(n, _)| n == literal)
                .ok_or_else(|| MutationError::UnresolvedTarget(format!("literal #{literal} is not a length bound")))?;
            let max = match spec.kind_schema(kind).and_then(|k| k.field(&field)).map(|f| f.ty) {
                Some(FieldType::Bytes { max_len }) => max_len as u64,
                _ => WIRE_MAX_LEN as u64,
            };
            let mut lits = Vec::new();
            literals_mut(&mut p, &mut lits);
            let slot = lits.into_iter().nth(*literal).unwrap();
            let Term::Int(v) = *slot else { unreachable!("length literals are integers") };
            let new = match choice {
                Boundary::Zero => 0,
                Boundary::One => 1,
                Boundary::MinusOne => v
                    .checked_sub(1)
                    .ok_or_else(|| MutationError::InvalidMutant(vec![literal_error(component, *index, "length below zero")]))?,
                Boundary::PlusOne => v + 1,
                Boundary::DomainMax => max,
            };
            *slot = Term::Int(new);
            out.component_mut(component).unwrap().requirements[*index] = p;
        }
        MutationOp::ControlFlow { component, index, flow } => {
            let p = requirement(spec, component, *index)?;
            let q = apply_flow(p, flow).ok_or_else(|| MutationError::UnresolvedTarget(format!("{flow:?} in `{component}`")))?;
            out.component_mut(component).unwrap().requirements[*index] = q;
        }
        MutationOp::DataStructure { schema_kind, field, delta } => {
            let ks = out
                .schema
                .iter_mut()
                .find(|k| k.kind == *schema_kind)
                .ok_or_else(|| MutationError::UnresolvedTarget(format!("schema kind `{schema_kind}`")))?;
            let fd = ks
                .fields
                .iter_mut()
                .find(|f| f.name == *field)
                .ok_or_else(|| MutationError::UnresolvedTarget(format!("field `{schema_kind}.{field}`")))?;
            fd.ty = match (fd.ty, delta) {
                (FieldType::UInt { .. }, SchemaChange::Width { bits }) => FieldType::UInt { bits: *bits },
                (FieldType::Bytes { .. }, SchemaChange::MaxLen { max_len }) => FieldType::Bytes { max_len: *max_len },
                (ty, d) => return Err(MutationError::TypeClash(format!("cannot apply {d:?} to {ty:?}"))),
            };
        }
    }
    out.validate().map_err(MutationError::InvalidMutant)?;
    let source_text = print_spec(spec);
    let op_json = serde_json::to_string(op).expect("ops serialize");
    Ok(Mutant {
        id: short_hash(&[source_text.as_bytes(), op_json.as_bytes()]),
        spec: out,
        lineage: Lineage { source_id: short_hash(&[source_text.as_bytes()]), op: op.clone(), seed },
    })
}

fn literal_error(component: &str, index: usize, msg: &str) -> SpecError {
    SpecError::LiteralOutOfDomain(crate::spec::Location { component: component.to_string(), requirement: Some(index) }, msg.to_string())
}

/// Every op of `kind` applicable to `spec`, in spec order. Value
/// replacements draw their new literal from `rng`.
pub fn candidates(spec: &ProtocolSpec, kind: MutationKind, rng: &mut ChaCha8Rng) -> Vec<MutationOp> {
    let mut ops = Vec::new();
    match kind {
        MutationKind::StatementDeleteOrAdd => {
            for c in &spec.components {
                for index in 0..c.requirements.len() {
                    ops.push(MutationOp::StatementDeleteOrAdd { component: c.name.clone(), statement: Statement::Delete { index } });
                }
                // shim requirements are neither generated nor checked
                if c.layer == Layer::Shim {
                    continue;
                }
                for (name, src) in TEMPLATES {
                    ops.push(MutationOp::StatementDeleteOrAdd {
                        component: c.name.clone(),
                        statement: Statement::Add { index: c.requirements.len(), predicate: src.to_string(), template: Some(name.to_string()) },
                    });
                }
            }
        }
        MutationKind::Negation => {
            for c in &spec.components {
                for index in 0..c.requirements.len() {
                    ops.push(MutationOp::Negation { component: c.name.clone(), index });
                }
            }
        }
        MutationKind::ValueReplacement => {
            for c in &spec.components {
                for (index, req) in c.requirements.iter().enumerate() {
                    for (literal, lit) in literals(req).iter().enumerate() {
                        let value = match lit {
                            Term::Int(v) if *v <= 0xff => Literal::Int((*v + rng.gen_range(1..=0xff)) % 0x100),
                            Term::Int(v) => Literal::Int(v.saturating_add(rng.gen_range(1..=*v.max(&16)))),
                            Term::Bytes(b) => Literal::Bytes(loop {
                                let n: Vec<u8> = (0..b.len().max(1)).map(|_| rng.gen()).collect();
                                if n != *b {
                                    break n;
                                }
                            }),
                            _ => continue,
                        };
                        ops.push(MutationOp::ValueReplacement { component: c.name.clone(), index, literal, value });
                    }
                }
            }
        }
        MutationKind::BoundaryValue => {
            for c in &spec.components {
                for (index, req) in c.requirements.iter().enumerate() {
                    for (literal, _) in length_literals(req) {
                        for choice in [Boundary::Zero, Boundary::One, Boundary::MinusOne, Boundary::PlusOne, Boundary::DomainMax] {
                            ops.push(MutationOp::BoundaryValue { component: c.name.clone(), index, literal, choice });
                        }
                    }
                }
            }
        }
        MutationKind::ControlFlow => {
            for c in &spec.components {
                for (index, req) in c.requirements.iter().enumerate() {
                    let positions: Vec<u64> = const_indices(req).into_iter().collect();
                    for (i, &a) in positions.iter().enumerate() {
                        for &b in &positions[i + 1..] {
                            ops.push(MutationOp::ControlFlow { component: c.name.clone(), index, flow: Flow::Swap { a, b } });
                        }
                    }
                    if flow_conjuncts(req).is_some() {
                        for &from in &positions {
                            for &to in &positions {
                                if from != to {
                                    ops.push(MutationOp::ControlFlow { component: c.name.clone(), index, flow: Flow::Duplicate { from, to } });
                                }
                            }
                        }
                    }
                }
            }
        }
        MutationKind::DataStructure => {
            for ks in &spec.schema {
                for fd in &ks.fields {
                    let deltas: Vec<SchemaChange> = match fd.ty {
                        FieldType::UInt { bits } => {
                            [8, 16, 32, 64].into_iter().filter(|b| *b != bits).map(|bits| SchemaChange::Width { bits }).collect()
                        }
                        FieldType::Bytes { max_len } => {
                            let mut lens: Vec<u32> = vec![1, max_len / 2, (max_len.saturating_mul(2)).min(WIRE_MAX_LEN)];
                            lens.retain(|l| *l != max_len && *l >= 1);
                            lens.dedup();
                            lens.into_iter().map(|max_len| SchemaChange::MaxLen { max_len }).collect()
                        }
                    };
                    for delta in deltas {
                        ops.push(MutationOp::DataStructure { schema_kind: ks.kind.clone(), field: fd.name.clone(), delta });
                    }
                }
            }
        }
    }
    ops
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Enumeration {
    pub mutants: Vec<Mutant>,
    /// Rejected (structurally invalid) mutants per kind.
    pub invalid: BTreeMap<MutationKind, usize>,
}

/// Up to `limit` distinct valid mutants of the requested kinds.
///
/// Candidates of each kind are shuffled under `seed` and taken round-robin
/// across kinds, so a small limit still covers every kind that has a valid
/// mutant.
pub fn enumerate(spec: &ProtocolSpec, kinds: &[MutationKind], seed: u64, limit: usize) -> Enumeration {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kinds: BTreeSet<MutationKind> = kinds.iter().copied().collect();
    let mut per_kind: Vec<Vec<Mutant>> = Vec::new();
    let mut invalid = BTreeMap::new();
    let mut seen = BTreeSet::new();
    let source = print_spec(spec);
    for kind in kinds {
        let mut valid = Vec::new();
        for op in candidates(spec, kind, &mut rng) {
            match apply_seeded(spec, &op, Some(seed)) {
                Ok(m) => {
                    let text = m.text();
                    if text != source && seen.insert(text) {
                        valid.push(m);
                    }
                }
                Err(MutationError::InvalidMutant(_)) => *invalid.entry(kind).or_insert(0) += 1,
                Err(_) => {}
            }
        }
        valid.shuffle(&mut rng);
        per_kind.push(valid);
    }
    let mut mutants = Vec::new();
    let mut round = 0;
    while mutants.len() < limit && per_kind.iter().any(|v| round < v.len()) {
        for v in &per_kind {
            if mutants.len() < limit && round < v.len() {
                mutants.push(v[round].clone());
            }
        }
        round += 1;
    }
    Enumeration { mutants, invalid }
}

/// One structural difference between two specs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Change {
    RequirementChanged { component: String, index: usize },
    RequirementAdded { component: String, index: usize },
    RequirementRemoved { component: String, index: usize },
    SchemaField { kind: String, field: String },
    Other(String),
}

/// Structural diff of two specs with the same components.
pub fn diff(source: &ProtocolSpec, mutant: &ProtocolSpec) -> Vec<Change> {
    let mut out = Vec::new();
    if source.name != mutant.name || source.guarantees != mutant.guarantees || source.bridges != mutant.bridges {
        out.push(Change::Other("spec header".into()));
    }
    if source.schema.len() != mutant.schema.len() {
        out.push(Change::Other("schema kinds".into()));
    }
    for (a, b) in source.schema.iter().zip(&mutant.schema) {
        if a.kind != b.kind || a.fields.len() != b.fields.len() {
            out.push(Change::Other(format!("schema kind `{}`", a.kind)));
            continue;
        }
        for (fa, fb) in a.fields.iter().zip(&b.fields) {
            if fa != fb {
                out.push(Change::SchemaField { kind: a.kind.clone(), field: fa.name.clone() });
            }
        }
    }
    if source.components.len() != mutant.components.len() {
        out.push(Change::Other("components".into()));
    }
    for (a, b) in source.components.iter().zip(&mutant.components) {
        if a.name != b.name || a.layer != b.layer || a.kind != b.kind || a.event != b.event || a.timing != b.timing {
            out.push(Change::Other(format!("component `{}`", a.name)));
            continue;
        }
        let (ra, rb) = (&a.requirements, &b.requirements);
        if ra.len() == rb.len() {
            for (i, (x, y)) in ra.iter().zip(rb).enumerate() {
                if x != y {
                    out.push(Change::RequirementChanged { component: a.name.clone(), index: i });
                }
            }
        } else if ra.len() + 1 == rb.len() || rb.len() + 1 == ra.len() {
            let (long, short, added) = if rb.len() > ra.len() { (rb, ra, true) } else { (ra, rb, false) };
            let at = (0..long.len()).find(|&i| i >= short.len() || long[i] != short[i]).unwrap();
            if long[at + 1..] != short[at..] {
                out.push(Change::Other(format!("requirements of `{}`", a.name)));
            } else if added {
                out.push(Change::RequirementAdded { component: a.name.clone(), index: at });
            } else {
                out.push(Change::RequirementRemoved { component: a.name.clone(), index: at });
            }
        } else {
            out.push(Change::Other(format!("requirements of `{}`", a.name)));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::minip;
    use crate::spec::{evaluate, print_predicate, Subject, Value};

    fn spec() -> &'static ProtocolSpec {
        &minip().spec
    }

    #[test]
    fn negating_the_ping_data_requirement() {
        let m = apply(spec(), &MutationOp::Negation { component: "ping_frame".into(), index: 0 }).unwrap();
        let req = &m.spec.component("ping_frame").unwrap().requirements[0];
        assert_eq!(print_predicate(req, "f"), "~f.data = \"ping\"");
        let frame = |d: &[u8]| Subject::new("ping").with("data", Value::Bytes(d.to_vec()));
        assert!(evaluate(req, &frame(b"pinx")).unwrap());
        assert!(!evaluate(req, &frame(b"ping")).unwrap());
        assert_eq!(diff(spec(), &m.spec), vec![Change::RequirementChanged { component: "ping_frame".into(), index: 0 }]);
    }

    #[test]
    fn adding_the_format_string_template() {
        let op = MutationOp::StatementDeleteOrAdd {
            component: "ping_frame".into(),
            statement: Statement::Add { index: 2, predicate: TEMPLATES[0].1.into(), template: Some("format_string".into()) },
        };
        let m = apply(spec(), &op).unwrap();
        assert_eq!(m.spec.component("ping_frame").unwrap().requirements[2], template("format_string").unwrap());
        assert_eq!(diff(spec(), &m.spec), vec![Change::RequirementAdded { component: "ping_frame".into(), index: 2 }]);
    }

    #[test]
    fn boundary_domain_max_on_the_ping_length() {
        let op = MutationOp::BoundaryValue { component: "ping_frame".into(), index: 1, literal: 0, choice: Boundary::DomainMax };
        let m = apply(spec(), &op).unwrap();
        assert_eq!(print_predicate(&m.spec.component("ping_frame").unwrap().requirements[1], "f"), "f.data.end = 65535");
        let minus = MutationOp::BoundaryValue { component: "ping_frame".into(), index: 1, literal: 0, choice: Boundary::Zero };
        let zero = apply(spec(), &minus).unwrap();
        let again = MutationOp::BoundaryValue { component: "ping_frame".into(), index: 1, literal: 0, choice: Boundary::MinusOne };
        assert!(matches!(apply(&zero.spec, &again), Err(MutationError::InvalidMutant(_))));
    }

    #[test]
    fn control_flow_swaps_and_duplicates_frame_positions() {
        let swap = MutationOp::ControlFlow { component: "packet".into(), index: 1, flow: Flow::Swap { a: 0, b: 1 } };
        let m = apply(spec(), &swap).unwrap();
        assert_eq!(
            print_predicate(&m.spec.component("packet").unwrap().requirements[1], "p"),
            "(p.kinds.value(1) = 1 | p.kinds.value(1) = 2) & p.kinds.value(0) = 3"
        );
        let dup = MutationOp::ControlFlow { component: "packet".into(), index: 1, flow: Flow::Duplicate { from: 0, to: 1 } };
        let m = apply(spec(), &dup).unwrap();
        assert_eq!(
            print_predicate(&m.spec.component("packet").unwrap().requirements[1], "p"),
            "(p.kinds.value(0) = 1 | p.kinds.value(0) = 2) & (p.kinds.value(1) = 1 | p.kinds.value(1) = 2)"
        );
    }

    #[test]
    fn data_structure_width_change() {
        let op = MutationOp::DataStructure { schema_kind: "timestamp".into(), field: "value".into(), delta: SchemaChange::Width { bits: 32 } };
        let m = apply(spec(), &op).unwrap();
        assert_eq!(m.spec.kind_schema("timestamp").unwrap().fields[0].ty, FieldType::UInt { bits: 32 });
        assert_eq!(diff(spec(), &m.spec), vec![Change::SchemaField { kind: "timestamp".into(), field: "value".into() }]);
        let shrink = MutationOp::DataStructure { schema_kind: "ping".into(), field: "data".into(), delta: SchemaChange::MaxLen { max_len: 1 } };
        assert!(matches!(apply(spec(), &shrink), Err(MutationError::InvalidMutant(_))));
    }

    #[test]
    fn errors_for_bad_targets_and_types() {
        let op = MutationOp::Negation { component: "ping_frame".into(), index: 9 };
        assert!(matches!(apply(spec(), &op), Err(MutationError::UnresolvedTarget(_))));
        let op = MutationOp::ValueReplacement { component: "ping_frame".into(), index: 0, literal: 0, value: Literal::Int(3) };
        assert!(matches!(apply(spec(), &op), Err(MutationError::TypeClash(_))));
    }

    #[test]
    fn ids_are_stable_and_distinct() {
        let a = apply(spec(), &MutationOp::Negation { component: "ping_frame".into(), index: 0 }).unwrap();
        let b = apply(spec(), &MutationOp::Negation { component: "ping_frame".into(), index: 0 }).unwrap();
        let c = apply(spec(), &MutationOp::Negation { component: "ping_frame".into(), index: 1 }).unwrap();
        assert_eq!(a.id, b.id);
        assert_ne!(a.id, c.id);
        assert_eq!(a.id.len(), 16);
        assert_eq!(a.lineage.source_id, spec_id(spec()));
    }

    #[test]
    fn lineage_json_shape() {
        let m = apply_seeded(spec(), &MutationOp::Negation { component: "packet".into(), index: 1 }, Some(9)).unwrap();
        let json = serde_json::to_value(&m.lineage).unwrap();
        assert_eq!(json["op"]["kind"], "negation");
        assert_eq!(json["op"]["component"], "packet");
        assert_eq!(json["seed"], 9);
        let back: Lineage = serde_json::from_value(json).unwrap();
        assert_eq!(back, m.lineage);
    }
}
