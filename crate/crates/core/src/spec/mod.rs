//! Layered protocol specifications.
//!
//! A [`ProtocolSpec`] is a set of [`SpecComponent`]s (frame, packet and shim
//! handlers), each carrying an ordered list of requirement [`Predicate`]s over
//! the fields of one subject kind declared in the spec's schema. Components are
//! linked by guarantee edges (the output of one is the assumed input of the
//! next) and, in composed system specs, by bridge rules that route an event of
//! one protocol to a handler of another.

mod check;
mod compose;
mod eval;
mod text;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

pub use check::{check_event, Violation, ViolationKind};
pub use compose::compose;
pub use eval::{evaluate, type_of, EvalError, TermType, MAX_INDEX_SCAN};
pub(crate) use eval::{eval_int, evaluate_with};
pub use text::{parse_predicate, parse_spec, print_predicate, print_spec, ParseError};

/// Largest byte length representable in a 16-bit length field.
pub const WIRE_MAX_LEN: u32 = 65_535;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldType {
    Bytes { max_len: u32 },
    UInt { bits: u8 },
}

impl FieldType {
    pub fn is_valid(&self) -> bool {
        match *self {
            FieldType::Bytes { max_len } => (1..=WIRE_MAX_LEN).contains(&max_len),
            FieldType::UInt { bits } => matches!(bits, 8 | 16 | 32 | 64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldDecl {
    pub name: String,
    pub ty: FieldType,
}

/// Field declarations for one frame or packet kind.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KindSchema {
    pub kind: String,
    pub fields: Vec<FieldDecl>,
}

impl KindSchema {
    pub fn field(&self, name: &str) -> Option<&FieldDecl> {
        self.fields.iter().find(|f| f.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CmpOp {
    Eq,
    Neq,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn negate(self) -> CmpOp {
        match self {
            CmpOp::Eq => CmpOp::Neq,
            CmpOp::Neq => CmpOp::Eq,
            CmpOp::Lt => CmpOp::Ge,
            CmpOp::Ge => CmpOp::Lt,
            CmpOp::Le => CmpOp::Gt,
            CmpOp::Gt => CmpOp::Le,
        }
    }

    /// The operator with its operands swapped (`a < b` ⇔ `b > a`).
    pub fn flip(self) -> CmpOp {
        match self {
            CmpOp::Lt => CmpOp::Gt,
            CmpOp::Gt => CmpOp::Lt,
            CmpOp::Le => CmpOp::Ge,
            CmpOp::Ge => CmpOp::Le,
            other => other,
        }
    }

    pub fn holds<T: Ord>(self, a: T, b: T) -> bool {
        match self {
            CmpOp::Eq => a == b,
            CmpOp::Neq => a != b,
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Neq => "~=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ArithOp {
    Add,
    Sub,
}

/// How a field is accessed: the whole value, the length of a byte string
/// (`.end`), or a single byte (`.value(i)`).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Access {
    Whole,
    End,
    Index(Box<Term>),
}

/// A reference to a field of the subject a requirement is checked against.
/// The subject kind is the kind of the enclosing component.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FieldPath {
    pub field: String,
    pub access: Access,
}

impl FieldPath {
    pub fn whole(field: impl Into<String>) -> Self {
        FieldPath { field: field.into(), access: Access::Whole }
    }

    pub fn end(field: impl Into<String>) -> Self {
        FieldPath { field: field.into(), access: Access::End }
    }

    pub fn index(field: impl Into<String>, at: Term) -> Self {
        FieldPath { field: field.into(), access: Access::Index(Box::new(at)) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Term {
    Int(u64),
    Bytes(Vec<u8>),
    Var(String),
    Field(FieldPath),
    Arith(ArithOp, Box<Term>, Box<Term>),
}

impl Term {
    pub fn field(path: FieldPath) -> Term {
        Term::Field(path)
    }

    pub fn add(a: Term, b: Term) -> Term {
        Term::Arith(ArithOp::Add, Box::new(a), Box::new(b))
    }

    pub fn sub(a: Term, b: Term) -> Term {
        Term::Arith(ArithOp::Sub, Box::new(a), Box::new(b))
    }

    /// Visits every field path in this term, including those nested in index
    /// expressions.
    pub fn visit_fields<'a>(&'a self, f: &mut dyn FnMut(&'a FieldPath)) {
        match self {
            Term::Field(path) => {
                f(path);
                if let Access::Index(at) = &path.access {
                    at.visit_fields(f);
                }
            }
            Term::Arith(_, a, b) => {
                a.visit_fields(f);
                b.visit_fields(f);
            }
            Term::Int(_) | Term::Bytes(_) | Term::Var(_) => {}
        }
    }

    pub fn mentions_var(&self, var: &str) -> bool {
        match self {
            Term::Var(v) => v == var,
            Term::Field(FieldPath { access: Access::Index(at), .. }) => at.mentions_var(var),
            Term::Field(_) | Term::Int(_) | Term::Bytes(_) => false,
            Term::Arith(_, a, b) => a.mentions_var(var) || b.mentions_var(var),
        }
    }
}

/// Requirement predicate over one subject.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Predicate {
    Bool(bool),
    Cmp { op: CmpOp, lhs: Term, rhs: Term },
    And(Box<Predicate>, Box<Predicate>),
    Or(Box<Predicate>, Box<Predicate>),
    Not(Box<Predicate>),
    /// `exists I. I < upper & body` (or `I <= upper` when `inclusive`), with
    /// `I` ranging over non-negative integers.
    ExistsIndex { var: String, inclusive: bool, upper: Term, body: Box<Predicate> },
}

impl Predicate {
    pub fn cmp(op: CmpOp, lhs: Term, rhs: Term) -> Predicate {
        Predicate::Cmp { op, lhs, rhs }
    }

    pub fn eq(lhs: Term, rhs: Term) -> Predicate {
        Predicate::cmp(CmpOp::Eq, lhs, rhs)
    }

    pub fn and(a: Predicate, b: Predicate) -> Predicate {
        Predicate::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Predicate, b: Predicate) -> Predicate {
        Predicate::Or(Box::new(a), Box::new(b))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(a: Predicate) -> Predicate {
        Predicate::Not(Box::new(a))
    }

    /// Conjunction of all predicates; `true` for an empty list.
    pub fn all(preds: impl IntoIterator<Item = Predicate>) -> Predicate {
        preds.into_iter().reduce(Predicate::and).unwrap_or(Predicate::Bool(true))
    }

    pub fn visit_terms<'a>(&'a self, f: &mut dyn FnMut(&'a Term)) {
        match self {
            Predicate::Bool(_) => {}
            Predicate::Cmp { lhs, rhs, .. } => {
                f(lhs);
                f(rhs);
            }
            Predicate::And(a, b) | Predicate::Or(a, b) => {
                a.visit_terms(f);
                b.visit_terms(f);
            }
            Predicate::Not(a) => a.visit_terms(f),
            Predicate::ExistsIndex { upper, body, .. } => {
                f(upper);
                body.visit_terms(f);
            }
        }
    }

    pub fn visit_fields<'a>(&'a self, f: &mut dyn FnMut(&'a FieldPath)) {
        self.visit_terms(&mut |t| t.visit_fields(f));
    }

    /// Names of all fields referenced anywhere in the predicate.
    pub fn fields(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.visit_fields(&mut |p| {
            out.insert(p.field.clone());
        });
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layer {
    Frame,
    Packet,
    Shim,
}

impl Layer {
    pub fn as_str(self) -> &'static str {
        match self {
            Layer::Frame => "frame",
            Layer::Packet => "packet",
            Layer::Shim => "shim",
        }
    }
}

/// A response deadline: the owning component's event must follow `after`
/// within `within_ms` milliseconds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timing {
    pub after: String,
    pub within_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpecComponent {
    pub name: String,
    pub layer: Layer,
    /// Subject kind the requirements are evaluated against.
    pub kind: String,
    pub event: String,
    /// Name the requirements use for the subject (`f` in `f.data`).
    pub param: String,
    pub requirements: Vec<Predicate>,
    pub timing: Option<Timing>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Guarantee {
    pub from: String,
    pub to: String,
}

/// Routes an event of one protocol to the handler of another in a composed
/// system spec.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Bridge {
    pub from_event: String,
    pub to_event: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtocolSpec {
    pub name: String,
    /// Protocols composed into this spec; empty for a single-protocol spec.
    /// Kinds, components and events of a composed spec carry a
    /// `<protocol>.` prefix.
    pub parts: Vec<String>,
    pub schema: Vec<KindSchema>,
    pub components: Vec<SpecComponent>,
    pub guarantees: Vec<Guarantee>,
    pub bridges: Vec<Bridge>,
}

/// Where a structural problem sits inside a spec.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Location {
    pub component: String,
    pub requirement: Option<usize>,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.requirement {
            Some(i) => write!(f, "component `{}` requirement #{}", self.component, i + 1),
            None => write!(f, "component `{}`", self.component),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SpecError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("{0}: unknown subject kind `{1}`")]
    UnknownKind(Location, String),
    #[error("schema kind `{0}` declared twice")]
    DuplicateKind(String),
    #[error("schema kind `{kind}`: invalid field `{field}`")]
    InvalidField { kind: String, field: String },
    #[error("{0}: unresolved field `{1}`")]
    UnresolvedField(Location, String),
    #[error("{0}: type mismatch: {1}")]
    TypeMismatch(Location, String),
    #[error("{0}: literal outside the field domain: {1}")]
    LiteralOutOfDomain(Location, String),
    #[error("{0}: unbound variable `{1}`")]
    UnboundVariable(Location, String),
    #[error("component `{0}` declared twice")]
    DuplicateComponent(String),
    #[error("event `{0}` handled by more than one component")]
    DuplicateEvent(String),
    #[error("{0}: deadline must be strictly positive")]
    NonPositiveDeadline(Location),
    #[error("{0}: timing refers to unknown event `{1}`")]
    UnknownTrigger(Location, String),
    #[error("guarantee `{0} -> {1}` refers to an unknown component")]
    UnknownGuaranteeEnd(String, String),
    #[error("guarantee graph has a cycle through `{0}`")]
    CyclicGuarantees(String),
    #[error("bridge refers to unknown event `{0}`")]
    DanglingBridge(String),
    #[error("name collision on `{0}`")]
    NameCollision(String),
    #[error("unknown event `{0}`")]
    UnknownEvent(String),
}

impl ProtocolSpec {
    pub fn kind_schema(&self, kind: &str) -> Option<&KindSchema> {
        self.schema.iter().find(|k| k.kind == kind)
    }

    pub fn component(&self, name: &str) -> Option<&SpecComponent> {
        self.components.iter().find(|c| c.name == name)
    }

    pub fn component_mut(&mut self, name: &str) -> Option<&mut SpecComponent> {
        self.components.iter_mut().find(|c| c.name == name)
    }

    pub fn component_for_event(&self, event: &str) -> Option<&SpecComponent> {
        self.components.iter().find(|c| c.event == event)
    }

    /// Components whose subject kind is `kind`, in declaration order.
    pub fn components_for_kind<'a>(&'a self, kind: &'a str) -> impl Iterator<Item = &'a SpecComponent> + 'a {
        self.components.iter().filter(move |c| c.kind == kind)
    }

    pub fn is_system(&self) -> bool {
        !self.parts.is_empty()
    }

    /// Maps a codec-level kind of `protocol` to the kind name used in this
    /// spec, or `None` when this spec does not cover that protocol.
    pub fn kind_for(&self, protocol: &str, kind: &str) -> Option<String> {
        if self.is_system() {
            self.parts.iter().any(|p| p == protocol).then(|| format!("{protocol}.{kind}"))
        } else {
            (self.name == protocol).then(|| kind.to_string())
        }
    }

    pub fn requirement_count(&self) -> usize {
        self.components.iter().map(|c| c.requirements.len()).sum()
    }

    /// Checks every structural invariant and returns all problems found.
    pub fn validate(&self) -> Result<(), Vec<SpecError>> {
        let mut errors = Vec::new();

        let mut kinds = BTreeSet::new();
        for ks in &self.schema {
            if !kinds.insert(ks.kind.as_str()) {
                errors.push(SpecError::DuplicateKind(ks.kind.clone()));
            }
            let mut names = BTreeSet::new();
            for fd in &ks.fields {
                if !fd.ty.is_valid() || !names.insert(fd.name.as_str()) {
                    errors.push(SpecError::InvalidField { kind: ks.kind.clone(), field: fd.name.clone() });
                }
            }
        }

        let mut names = BTreeSet::new();
        let mut events = BTreeSet::new();
        for c in &self.components {
            if !names.insert(c.name.as_str()) {
                errors.push(SpecError::DuplicateComponent(c.name.clone()));
            }
            if !events.insert(c.event.as_str()) {
                errors.push(SpecError::DuplicateEvent(c.event.clone()));
            }
        }

        for c in &self.components {
            let loc = Location { component: c.name.clone(), requirement: None };
            let Some(ks) = self.kind_schema(&c.kind) else {
                errors.push(SpecError::UnknownKind(loc, c.kind.clone()));
                continue;
            };
            if let Some(t) = &c.timing {
                if t.within_ms == 0 {
                    errors.push(SpecError::NonPositiveDeadline(loc.clone()));
                }
                if !events.contains(t.after.as_str()) {
                    errors.push(SpecError::UnknownTrigger(loc.clone(), t.after.clone()));
                }
            }
            for (i, req) in c.requirements.iter().enumerate() {
                let loc = Location { component: c.name.clone(), requirement: Some(i) };
                eval::check_predicate(req, ks, &loc, &mut errors);
            }
        }

        for g in &self.guarantees {
            if !names.contains(g.from.as_str()) || !names.contains(g.to.as_str()) {
                errors.push(SpecError::UnknownGuaranteeEnd(g.from.clone(), g.to.clone()));
            }
        }
        if let Some(node) = self.guarantee_cycle() {
            errors.push(SpecError::CyclicGuarantees(node));
        }

        for b in &self.bridges {
            for ev in [&b.from_event, &b.to_event] {
                if !events.contains(ev.as_str()) {
                    errors.push(SpecError::DanglingBridge(ev.clone()));
                }
            }
        }

        if errors.is_empty() {
            Ok(())
        } else {
            Err(errors)
        }
    }

    fn guarantee_cycle(&self) -> Option<String> {
        let mut adj: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for g in &self.guarantees {
            adj.entry(g.from.as_str()).or_default().push(g.to.as_str());
        }
        // 0 = unvisited, 1 = on stack, 2 = done
        let mut state: BTreeMap<&str, u8> = BTreeMap::new();
        fn dfs<'a>(n: &'a str, adj: &BTreeMap<&'a str, Vec<&'a str>>, state: &mut BTreeMap<&'a str, u8>) -> Option<String> {
            state.insert(n, 1);
            for &m in adj.get(n).map(Vec::as_slice).unwrap_or(&[]) {
                match state.get(m).copied().unwrap_or(0) {
                    1 => return Some(m.to_string()),
                    0 => {
                        if let Some(c) = dfs(m, adj, state) {
                            return Some(c);
                        }
                    }
                    _ => {}
                }
            }
            state.insert(n, 2);
            None
        }
        let starts: Vec<&str> = adj.keys().copied().collect();
        for n in starts {
            if state.get(n).copied().unwrap_or(0) == 0 {
                if let Some(c) = dfs(n, &adj, &mut state) {
                    return Some(c);
                }
            }
        }
        None
    }
}

/// A concrete field value of a frame or packet.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Value {
    Bytes(#[serde(with = "hex_bytes")] Vec<u8>),
    Int(u64),
}

/// A concrete frame or packet viewed as a set of named fields.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Subject {
    pub kind: String,
    pub fields: BTreeMap<String, Value>,
}

impl Subject {
    pub fn new(kind: impl Into<String>) -> Self {
        Subject { kind: kind.into(), fields: BTreeMap::new() }
    }

    pub fn with(mut self, field: impl Into<String>, value: Value) -> Self {
        self.fields.insert(field.into(), value);
        self
    }

    pub fn bytes(&self, field: &str) -> Option<&[u8]> {
        match self.fields.get(field) {
            Some(Value::Bytes(b)) => Some(b),
            _ => None,
        }
    }

    pub fn int(&self, field: &str) -> Option<u64> {
        match self.fields.get(field) {
            Some(Value::Int(v)) => Some(*v),
            _ => None,
        }
    }

    /// Compact dump of every field, byte strings in lowercase hex.
    pub fn snapshot(&self) -> String {
        let fields: Vec<String> = self
            .fields
            .iter()
            .map(|(k, v)| match v {
                Value::Bytes(b) => format!("{k}={}", hex::encode(b)),
                Value::Int(i) => format!("{k}={i}"),
            })
            .collect();
        format!("{}{{{}}}", self.kind, fields.join(","))
    }
}

pub(crate) mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        if s.bytes().any(|b| b.is_ascii_uppercase()) {
            return Err(serde::de::Error::custom("hex must be lowercase"));
        }
        hex::decode(&s).map_err(serde::de::Error::custom)
    }
}
