use super::{Access, ArithOp, CmpOp, FieldPath, FieldType, KindSchema, Location, Predicate, SpecError, Subject, Term, Value};

/// Existential index ranges are scanned up to this many candidates. Every
/// byte string is bounded by the 16-bit wire length, so any index past this
/// point is out of range for all fields.
pub const MAX_INDEX_SCAN: i128 = 1 << 20;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("unresolved field `{0}` on subject kind `{1}`")]
    UnresolvedField(String, String),
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TermType {
    Int,
    Byte,
    Bytes,
}

/// Static type of `term` under `schema`, with `vars` in scope.
pub fn type_of(term: &Term, schema: &KindSchema, vars: &[&str]) -> Result<TermType, String> {
    match term {
        Term::Int(_) => Ok(TermType::Int),
        Term::Bytes(_) => Ok(TermType::Bytes),
        Term::Var(v) => {
            if vars.contains(&v.as_str()) {
                Ok(TermType::Int)
            } else {
                Err(format!("unbound variable `{v}`"))
            }
        }
        Term::Field(path) => {
            let decl = schema.field(&path.field).ok_or_else(|| format!("unresolved field `{}`", path.field))?;
            match (&path.access, decl.ty) {
                (Access::Whole, FieldType::Bytes { .. }) => Ok(TermType::Bytes),
                (Access::Whole, FieldType::UInt { .. }) => Ok(TermType::Int),
                (Access::End, FieldType::Bytes { .. }) => Ok(TermType::Int),
                (Access::Index(at), FieldType::Bytes { .. }) => match type_of(at, schema, vars)? {
                    TermType::Int => Ok(TermType::Byte),
                    other => Err(format!("index of `{}` must be an integer, found {other:?}", path.field)),
                },
                (_, FieldType::UInt { .. }) => Err(format!("`{}` is an integer field and has no byte access", path.field)),
            }
        }
        Term::Arith(_, a, b) => {
            let ta = type_of(a, schema, vars)?;
            let tb = type_of(b, schema, vars)?;
            if ta == TermType::Int && tb == TermType::Int {
                Ok(TermType::Int)
            } else {
                Err(format!("arithmetic needs integers, found {ta:?} and {tb:?}"))
            }
        }
    }
}

fn cmp_compatible(op: CmpOp, lhs: &Term, lt: TermType, rhs: &Term, rt: TermType) -> Result<(), String> {
    let byte_literal = |t: &Term| matches!(t, Term::Int(v) if *v <= 0xff);
    let ok = match (lt, rt) {
        (TermType::Int, TermType::Int) | (TermType::Byte, TermType::Byte) => true,
        (TermType::Byte, TermType::Int) => byte_literal(rhs),
        (TermType::Int, TermType::Byte) => byte_literal(lhs),
        (TermType::Bytes, TermType::Bytes) => matches!(op, CmpOp::Eq | CmpOp::Neq),
        _ => false,
    };
    if ok {
        Ok(())
    } else {
        Err(format!("cannot compare {lt:?} with {rt:?} using `{}`", op.symbol()))
    }
}

/// Static checks of one requirement against the subject schema.
pub(crate) fn check_predicate(pred: &Predicate, schema: &KindSchema, loc: &Location, errors: &mut Vec<SpecError>) {
    fn walk<'a>(p: &'a Predicate, schema: &KindSchema, vars: &mut Vec<&'a str>, loc: &Location, errors: &mut Vec<SpecError>) {
        match p {
            Predicate::Bool(_) => {}
            Predicate::Cmp { op, lhs, rhs } => {
                let mut fields_ok = true;
                for t in [lhs, rhs] {
                    t.visit_fields(&mut |path| {
                        if schema.field(&path.field).is_none() {
                            errors.push(SpecError::UnresolvedField(loc.clone(), path.field.clone()));
                            fields_ok = false;
                        }
                    });
                }
                if !fields_ok {
                    return;
                }
                let types = type_of(lhs, schema, vars).and_then(|lt| type_of(rhs, schema, vars).map(|rt| (lt, rt)));
                match types {
                    Ok((lt, rt)) => {
                        if let Err(e) = cmp_compatible(*op, lhs, lt, rhs, rt) {
                            errors.push(SpecError::TypeMismatch(loc.clone(), e));
                        } else {
                            check_domain(*op, lhs, rhs, schema, loc, errors);
                            check_domain(op.flip(), rhs, lhs, schema, loc, errors);
                        }
                    }
                    Err(e) if e.starts_with("unbound variable") => {
                        let var = e.split('`').nth(1).unwrap_or_default().to_string();
                        errors.push(SpecError::UnboundVariable(loc.clone(), var));
                    }
                    Err(e) => errors.push(SpecError::TypeMismatch(loc.clone(), e)),
                }
            }
            Predicate::And(a, b) | Predicate::Or(a, b) => {
                walk(a, schema, vars, loc, errors);
                walk(b, schema, vars, loc, errors);
            }
            Predicate::Not(a) => walk(a, schema, vars, loc, errors),
            Predicate::ExistsIndex { var, upper, body, .. } => {
                match type_of(upper, schema, vars) {
                    Ok(TermType::Int) => {}
                    Ok(t) => errors.push(SpecError::TypeMismatch(loc.clone(), format!("index bound must be an integer, found {t:?}"))),
                    Err(e) => errors.push(SpecError::TypeMismatch(loc.clone(), e)),
                }
                vars.push(var.as_str());
                walk(body, schema, vars, loc, errors);
                vars.pop();
            }
        }
    }
    walk(pred, schema, &mut Vec::new(), loc, errors);
}

/// Literals that no value of the field's domain can ever equal.
fn check_domain(op: CmpOp, lhs: &Term, rhs: &Term, schema: &KindSchema, loc: &Location, errors: &mut Vec<SpecError>) {
    let Term::Field(path) = lhs else { return };
    let Some(decl) = schema.field(&path.field) else { return };
    if let Access::Index(at) = &path.access {
        if let (Term::Int(i), FieldType::Bytes { max_len }) = (at.as_ref(), decl.ty) {
            if *i >= max_len as u64 {
                errors.push(SpecError::LiteralOutOfDomain(
                    loc.clone(),
                    format!("index {i} of `{}` is beyond its maximum length {max_len}", path.field),
                ));
            }
        }
    }
    if op != CmpOp::Eq {
        return;
    }
    match (&path.access, decl.ty, rhs) {
        (Access::Whole, FieldType::Bytes { max_len }, Term::Bytes(lit)) if lit.len() > max_len as usize => {
            errors.push(SpecError::LiteralOutOfDomain(
                loc.clone(),
                format!("{}-byte literal exceeds `{}` maximum length {max_len}", lit.len(), path.field),
            ));
        }
        (Access::End, FieldType::Bytes { max_len }, Term::Int(n)) if *n > max_len as u64 => {
            errors.push(SpecError::LiteralOutOfDomain(
                loc.clone(),
                format!("length {n} exceeds `{}` maximum length {max_len}", path.field),
            ));
        }
        (Access::Whole, FieldType::UInt { bits }, Term::Int(n)) if bits < 64 && *n >= 1u64 << bits => {
            errors.push(SpecError::LiteralOutOfDomain(loc.clone(), format!("{n} does not fit `{}` ({bits} bits)", path.field)));
        }
        _ => {}
    }
}

#[derive(Debug, Clone, Copy)]
enum Val<'a> {
    Int(i128),
    Byte(u8),
    Bytes(&'a [u8]),
    /// A byte access past the end of its string.
    OutOfRange,
}

struct Env<'s> {
    subject: &'s Subject,
    vars: Vec<(String, i128)>,
}

impl<'s> Env<'s> {
    fn field(&self, name: &str) -> Result<&'s Value, EvalError> {
        self.subject
            .fields
            .get(name)
            .ok_or_else(|| EvalError::UnresolvedField(name.to_string(), self.subject.kind.clone()))
    }

    fn var(&self, name: &str) -> Result<i128, EvalError> {
        self.vars
            .iter()
            .rev()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
            .ok_or_else(|| EvalError::UnboundVariable(name.to_string()))
    }

    fn term<'t>(&self, t: &'t Term) -> Result<Val<'t>, EvalError>
    where
        's: 't,
    {
        match t {
            Term::Int(v) => Ok(Val::Int(*v as i128)),
            Term::Bytes(b) => Ok(Val::Bytes(b)),
            Term::Var(v) => Ok(Val::Int(self.var(v)?)),
            Term::Field(FieldPath { field, access }) => {
                let value = self.field(field)?;
                match (access, value) {
                    (Access::Whole, Value::Bytes(b)) => Ok(Val::Bytes(b)),
                    (Access::Whole, Value::Int(i)) => Ok(Val::Int(*i as i128)),
                    (Access::End, Value::Bytes(b)) => Ok(Val::Int(b.len() as i128)),
                    (Access::Index(at), Value::Bytes(b)) => {
                        let i = self.int(at)?;
                        Ok(usize::try_from(i).ok().and_then(|i| b.get(i)).map_or(Val::OutOfRange, |x| Val::Byte(*x)))
                    }
                    (_, Value::Int(_)) => Err(EvalError::TypeMismatch(format!("`{field}` is an integer field and has no byte access"))),
                }
            }
            Term::Arith(op, a, b) => {
                let (a, b) = (self.int(a)?, self.int(b)?);
                Ok(Val::Int(match op {
                    ArithOp::Add => a.saturating_add(b),
                    ArithOp::Sub => a.saturating_sub(b),
                }))
            }
        }
    }

    fn int(&self, t: &Term) -> Result<i128, EvalError> {
        match self.term(t)? {
            Val::Int(i) => Ok(i),
            other => Err(EvalError::TypeMismatch(format!("expected an integer, found {other:?}"))),
        }
    }

    fn pred(&mut self, p: &Predicate) -> Result<bool, EvalError> {
        match p {
            Predicate::Bool(b) => Ok(*b),
            Predicate::Cmp { op, lhs, rhs } => {
                let (l, r) = (self.term(lhs)?, self.term(rhs)?);
                compare(*op, l, lhs, r, rhs)
            }
            Predicate::And(a, b) => {
                let x = self.pred(a)?;
                let y = self.pred(b)?;
                Ok(x && y)
            }
            Predicate::Or(a, b) => {
                let x = self.pred(a)?;
                let y = self.pred(b)?;
                Ok(x || y)
            }
            Predicate::Not(a) => Ok(!self.pred(a)?),
            Predicate::ExistsIndex { var, inclusive, upper, body } => {
                let mut end = self.int(upper)?;
                if *inclusive {
                    end = end.saturating_add(1);
                }
                let end = end.min(MAX_INDEX_SCAN);
                let mut found = false;
                self.vars.push((var.clone(), 0));
                let slot = self.vars.len() - 1;
                for i in 0..end.max(0) {
                    self.vars[slot].1 = i;
                    match self.pred(body) {
                        Ok(false) => {}
                        Ok(true) => {
                            found = true;
                            break;
                        }
                        Err(e) => {
                            self.vars.truncate(slot);
                            return Err(e);
                        }
                    }
                }
                self.vars.truncate(slot);
                Ok(found)
            }
        }
    }
}

fn compare(op: CmpOp, l: Val<'_>, lt: &Term, r: Val<'_>, rt: &Term) -> Result<bool, EvalError> {
    match (l, r) {
        (Val::OutOfRange, _) | (_, Val::OutOfRange) => Ok(false),
        (Val::Int(a), Val::Int(b)) => Ok(op.holds(a, b)),
        (Val::Byte(a), Val::Byte(b)) => Ok(op.holds(a, b)),
        (Val::Byte(a), Val::Int(b)) if matches!(rt, Term::Int(v) if *v <= 0xff) => Ok(op.holds(a as i128, b)),
        (Val::Int(a), Val::Byte(b)) if matches!(lt, Term::Int(v) if *v <= 0xff) => Ok(op.holds(a, b as i128)),
        (Val::Bytes(a), Val::Bytes(b)) if matches!(op, CmpOp::Eq | CmpOp::Neq) => Ok(op.holds(a, b)),
        (l, r) => Err(EvalError::TypeMismatch(format!("cannot compare {l:?} with {r:?} using `{}`", op.symbol()))),
    }
}

/// Truth value of `pred` on `subject`.
///
/// A comparison that reads a byte past the end of its string is false.
/// Existential indices are decided by scanning every candidate in range.
pub fn evaluate(pred: &Predicate, subject: &Subject) -> Result<bool, EvalError> {
    Env { subject, vars: Vec::new() }.pred(pred)
}

/// `evaluate` with index variables already bound.
pub(crate) fn evaluate_with(pred: &Predicate, subject: &Subject, vars: &[(String, i128)]) -> Result<bool, EvalError> {
    Env { subject, vars: vars.to_vec() }.pred(pred)
}

/// Integer value of `term`, with index variables bound.
pub(crate) fn eval_int(term: &Term, subject: &Subject, vars: &[(String, i128)]) -> Result<i128, EvalError> {
    Env { subject, vars: vars.to_vec() }.int(term)
}
