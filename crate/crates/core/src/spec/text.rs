//! Declarative text format for protocol specs.
//!
//! ```text
//! protocol minip;
//!
//! schema ping {
//!     data: bytes[65535];
//! }
//!
//! component ping_frame : frame(ping) {
//!     before ping_frame.ping.handle(f);
//!     require f.data = "ping";   # data must be 'ping'
//!     require f.data.end = 4;
//! }
//!
//! guarantee ping_frame -> packet;
//! ```
//!
//! The full grammar is documented in `docs/spec-format.md`.

use std::fmt::{self, Write as _};

use super::{Access, ArithOp, Bridge, CmpOp, FieldDecl, FieldPath, FieldType, Guarantee, KindSchema, Layer, Predicate, ProtocolSpec, SpecComponent, Term, Timing};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{line}:{col}: {msg}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub msg: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Int(u64),
    Str(Vec<u8>),
    Punct(&'static str),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Int(i) => write!(f, "`{i}`"),
            Tok::Str(_) => f.write_str("string literal"),
            Tok::Punct(p) => write!(f, "`{p}`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

const PUNCT: &[&str] = &[
    "->", "<=", ">=", "~=", "!=", ".", "(", ")", "{", "}", "[", "]", ";", ":", ",", "=", "<", ">", "&", "|", "~", "+", "-",
];

fn lex(src: &str) -> Result<Vec<Spanned>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let err = |line, col, msg: String| ParseError { line, col, msg };
    while i < bytes.len() {
        let c = bytes[i];
        if c == b'\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_ascii_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == b'#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let (start_line, start_col) = (line, col);
        if c.is_ascii_alphabetic() || c == b'_' {
            let s = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            col += i - s;
            out.push(Spanned { tok: Tok::Ident(src[s..i].to_string()), line: start_line, col: start_col });
            continue;
        }
        if c.is_ascii_digit() {
            let s = i;
            let value = if c == b'0' && matches!(bytes.get(i + 1), Some(b'x' | b'X')) {
                i += 2;
                let h = i;
                while i < bytes.len() && bytes[i].is_ascii_hexdigit() {
                    i += 1;
                }
                u64::from_str_radix(&src[h..i], 16)
            } else {
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                src[s..i].parse::<u64>()
            };
            if i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                return Err(err(start_line, start_col, format!("malformed number `{}`", &src[s..=i])));
            }
            let v = value.map_err(|e| err(start_line, start_col, format!("bad integer literal `{}`: {e}", &src[s..i])))?;
            col += i - s;
            out.push(Spanned { tok: Tok::Int(v), line: start_line, col: start_col });
            continue;
        }
        if c == b'"' {
            i += 1;
            col += 1;
            let mut lit = Vec::new();
            loop {
                match bytes.get(i) {
                    None | Some(b'\n') => return Err(err(start_line, start_col, "unterminated string literal".into())),
                    Some(b'"') => {
                        i += 1;
                        col += 1;
                        break;
                    }
                    Some(b'\\') => {
                        let esc = bytes.get(i + 1).copied();
                        match esc {
                            Some(b'"') => lit.push(b'"'),
                            Some(b'\\') => lit.push(b'\\'),
                            Some(b'n') => lit.push(b'\n'),
                            Some(b't') => lit.push(b'\t'),
                            Some(b'x') => {
                                let hx = src.get(i + 2..i + 4).filter(|h| h.bytes().all(|b| b.is_ascii_hexdigit()));
                                let Some(hx) = hx else {
                                    return Err(err(line, col, "`\\x` needs two hex digits".into()));
                                };
                                lit.push(u8::from_str_radix(hx, 16).expect("checked hex"));
                                i += 2;
                                col += 2;
                            }
                            _ => return Err(err(line, col, "unknown escape in string literal".into())),
                        }
                        i += 2;
                        col += 2;
                    }
                    Some(&b) => {
                        lit.push(b);
                        i += 1;
                        col += 1;
                    }
                }
            }
            out.push(Spanned { tok: Tok::Str(lit), line: start_line, col: start_col });
            continue;
        }
        let rest = &src[i..];
        let Some(p) = PUNCT.iter().find(|p| rest.starts_with(**p)) else {
            let ch = rest.chars().next().unwrap_or('?');
            return Err(err(line, col, format!("unexpected character `{ch}`")));
        };
        i += p.len();
        col += p.len();
        out.push(Spanned { tok: Tok::Punct(p), line: start_line, col: start_col });
    }
    out.push(Spanned { tok: Tok::Eof, line, col });
    Ok(out)
}

const MAX_DEPTH: usize = 200;

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
    depth: usize,
}

enum Group {
    Pred(Predicate),
    Term(Term),
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn new(src: &str) -> PResult<Self> {
        Ok(Parser { toks: lex(src)?, pos: 0, depth: 0 })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        &self.toks[(self.pos + n).min(self.toks.len() - 1)].tok
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, msg: impl Into<String>) -> PResult<T> {
        let s = &self.toks[self.pos];
        Err(ParseError { line: s.line, col: s.col, msg: msg.into() })
    }

    fn unexpected<T>(&self, wanted: &str) -> PResult<T> {
        self.error(format!("expected {wanted}, found {}", self.peek()))
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Tok::Punct(q) if *q == p)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if self.is_punct(p) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, p: &str) -> PResult<()> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            self.unexpected(&format!("`{p}`"))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<()> {
        if self.is_kw(kw) {
            self.bump();
            Ok(())
        } else {
            self.unexpected(&format!("`{kw}`"))
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek() {
            Tok::Ident(s) => {
                let s = s.clone();
                self.bump();
                Ok(s)
            }
            _ => self.unexpected("an identifier"),
        }
    }

    fn int(&mut self) -> PResult<u64> {
        match self.peek() {
            Tok::Int(v) => {
                let v = *v;
                self.bump();
                Ok(v)
            }
            _ => self.unexpected("an integer"),
        }
    }

    /// Dotted name such as `ping_frame.ping.handle`.
    fn name(&mut self) -> PResult<String> {
        let mut s = self.ident()?;
        while self.is_punct(".") && matches!(self.peek_at(1), Tok::Ident(_)) {
            self.bump();
            s.push('.');
            s.push_str(&self.ident()?);
        }
        Ok(s)
    }

    // ---- predicates -------------------------------------------------------

    fn pred(&mut self) -> PResult<Predicate> {
        let first = self.unary()?;
        self.or_from(first)
    }

    fn or_from(&mut self, first: Predicate) -> PResult<Predicate> {
        let mut lhs = self.conj_from(first)?;
        while self.eat_punct("|") {
            let next = self.unary()?;
            let rhs = self.conj_from(next)?;
            lhs = Predicate::or(lhs, rhs);
        }
        Ok(lhs)
    }

    fn conj_from(&mut self, first: Predicate) -> PResult<Predicate> {
        let mut lhs = first;
        while self.eat_punct("&") {
            let rhs = self.unary()?;
            lhs = Predicate::and(lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Predicate> {
        match self.unary_or_term()? {
            Group::Pred(p) => Ok(p),
            Group::Term(_) => self.unexpected("a comparison operator"),
        }
    }

    fn enter(&mut self) -> PResult<()> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return self.error("expression nested too deeply");
        }
        Ok(())
    }

    /// A unary predicate, or a bare term when a parenthesised group turns
    /// out to hold arithmetic (`(f.data.end - 8) > 3`).
    fn unary_or_term(&mut self) -> PResult<Group> {
        self.enter()?;
        let r = self.unary_or_term_inner();
        self.depth -= 1;
        r
    }

    fn unary_or_term_inner(&mut self) -> PResult<Group> {
        if self.eat_punct("~") {
            return Ok(Group::Pred(Predicate::not(self.unary()?)));
        }
        if self.is_kw("exists") && !matches!(self.peek_at(1), Tok::Punct(".")) {
            return Ok(Group::Pred(self.exists()?));
        }
        if self.is_kw("true") && !matches!(self.peek_at(1), Tok::Punct(".")) {
            self.bump();
            return Ok(Group::Pred(Predicate::Bool(true)));
        }
        if self.is_kw("false") && !matches!(self.peek_at(1), Tok::Punct(".")) {
            self.bump();
            return Ok(Group::Pred(Predicate::Bool(false)));
        }
        if self.eat_punct("(") {
            let inner = match self.unary_or_term()? {
                Group::Pred(p) => Group::Pred(self.or_from(p)?),
                Group::Term(t) => Group::Term(t),
            };
            self.expect_punct(")")?;
            return match inner {
                Group::Pred(p) => Ok(Group::Pred(p)),
                Group::Term(t) => self.finish_comparison(t),
            };
        }
        let lhs = self.primary()?;
        self.finish_comparison(lhs)
    }

    fn finish_comparison(&mut self, first: Term) -> PResult<Group> {
        let lhs = self.term_from(first)?;
        let op = match self.peek() {
            Tok::Punct("=") => CmpOp::Eq,
            Tok::Punct("~=" | "!=") => CmpOp::Neq,
            Tok::Punct("<") => CmpOp::Lt,
            Tok::Punct("<=") => CmpOp::Le,
            Tok::Punct(">") => CmpOp::Gt,
            Tok::Punct(">=") => CmpOp::Ge,
            _ => return Ok(Group::Term(lhs)),
        };
        self.bump();
        let rhs = self.term()?;
        Ok(Group::Pred(Predicate::cmp(op, lhs, rhs)))
    }

    fn exists(&mut self) -> PResult<Predicate> {
        self.expect_kw("exists")?;
        let var = self.ident()?;
        self.expect_punct(".")?;
        let at = self.pos;
        let body = self.pred()?;
        // The leftmost conjunct must bound the variable: `I < e` or `I <= e`.
        let mut spine = Vec::new();
        let mut cur = body;
        loop {
            match cur {
                Predicate::And(a, b) => {
                    spine.push(*b);
                    cur = *a;
                }
                other => {
                    spine.push(other);
                    break;
                }
            }
        }
        spine.reverse();
        let mut conjuncts = spine.into_iter();
        let bound = conjuncts.next().expect("non-empty spine");
        let (inclusive, upper) = match bound {
            Predicate::Cmp { op: op @ (CmpOp::Lt | CmpOp::Le), lhs: Term::Var(v), rhs } if v == var && !rhs.mentions_var(&var) => {
                (op == CmpOp::Le, rhs)
            }
            _ => {
                let s = &self.toks[at];
                return Err(ParseError {
                    line: s.line,
                    col: s.col,
                    msg: format!("`exists {var}.` must start with a bound `{var} < e` or `{var} <= e`"),
                });
            }
        };
        let body = conjuncts.reduce(Predicate::and).unwrap_or(Predicate::Bool(true));
        Ok(Predicate::ExistsIndex { var, inclusive, upper, body: Box::new(body) })
    }

    fn term(&mut self) -> PResult<Term> {
        let first = self.primary()?;
        self.term_from(first)
    }

    fn term_from(&mut self, first: Term) -> PResult<Term> {
        let mut lhs = first;
        loop {
            let op = if self.is_punct("+") {
                ArithOp::Add
            } else if self.is_punct("-") {
                ArithOp::Sub
            } else {
                return Ok(lhs);
            };
            self.bump();
            let rhs = self.primary()?;
            lhs = Term::Arith(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn primary(&mut self) -> PResult<Term> {
        self.enter()?;
        let r = self.primary_inner();
        self.depth -= 1;
        r
    }

    fn primary_inner(&mut self) -> PResult<Term> {
        match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                Ok(Term::Int(v))
            }
            Tok::Str(b) => {
                self.bump();
                Ok(Term::Bytes(b))
            }
            Tok::Punct("(") => {
                self.bump();
                let t = self.term()?;
                self.expect_punct(")")?;
                Ok(t)
            }
            Tok::Ident(_) => {
                let var = self.ident()?;
                if !self.eat_punct(".") {
                    return Ok(Term::Var(var));
                }
                let field = self.ident()?;
                if self.is_punct(".") && self.is_kw_at(1, "end") {
                    self.bump();
                    self.bump();
                    return Ok(Term::Field(FieldPath::end(field)));
                }
                if self.is_punct(".") && self.is_kw_at(1, "value") {
                    self.bump();
                    self.bump();
                    self.expect_punct("(")?;
                    let at = self.term()?;
                    self.expect_punct(")")?;
                    return Ok(Term::Field(FieldPath::index(field, at)));
                }
                Ok(Term::Field(FieldPath::whole(field)))
            }
            _ => self.unexpected("a term"),
        }
    }

    fn is_kw_at(&self, n: usize, kw: &str) -> bool {
        matches!(self.peek_at(n), Tok::Ident(s) if s == kw)
    }

    // ---- documents --------------------------------------------------------

    fn spec(&mut self) -> PResult<ProtocolSpec> {
        self.expect_kw("protocol")?;
        let name = self.name()?;
        self.expect_punct(";")?;
        let mut spec = ProtocolSpec { name, parts: Vec::new(), schema: Vec::new(), components: Vec::new(), guarantees: Vec::new(), bridges: Vec::new() };
        loop {
            match self.peek() {
                Tok::Eof => break,
                Tok::Ident(kw) => match kw.as_str() {
                    "part" => {
                        self.bump();
                        spec.parts.push(self.name()?);
                        self.expect_punct(";")?;
                    }
                    "schema" => {
                        let ks = self.schema()?;
                        spec.schema.push(ks);
                    }
                    "component" => {
                        let c = self.component()?;
                        spec.components.push(c);
                    }
                    "guarantee" => {
                        self.bump();
                        let from = self.name()?;
                        self.expect_punct("->")?;
                        let to = self.name()?;
                        self.expect_punct(";")?;
                        spec.guarantees.push(Guarantee { from, to });
                    }
                    "bridge" => {
                        self.bump();
                        let from_event = self.name()?;
                        self.expect_punct("->")?;
                        let to_event = self.name()?;
                        self.expect_punct(";")?;
                        spec.bridges.push(Bridge { from_event, to_event });
                    }
                    _ => return self.unexpected("`schema`, `component`, `guarantee`, `bridge` or `part`"),
                },
                _ => return self.unexpected("a declaration"),
            }
        }
        Ok(spec)
    }

    fn schema(&mut self) -> PResult<KindSchema> {
        self.expect_kw("schema")?;
        let kind = self.name()?;
        self.expect_punct("{")?;
        let mut fields = Vec::new();
        while !self.eat_punct("}") {
            let name = self.ident()?;
            self.expect_punct(":")?;
            let ty = match self.ident()?.as_str() {
                "bytes" => {
                    self.expect_punct("[")?;
                    let n = self.int()?;
                    self.expect_punct("]")?;
                    let max_len = u32::try_from(n).or_else(|_| self.error("byte length bound too large"))?;
                    FieldType::Bytes { max_len }
                }
                "u8" => FieldType::UInt { bits: 8 },
                "u16" => FieldType::UInt { bits: 16 },
                "u32" => FieldType::UInt { bits: 32 },
                "u64" => FieldType::UInt { bits: 64 },
                other => return self.error(format!("unknown field type `{other}`")),
            };
            self.expect_punct(";")?;
            fields.push(FieldDecl { name, ty });
        }
        Ok(KindSchema { kind, fields })
    }

    fn component(&mut self) -> PResult<SpecComponent> {
        self.expect_kw("component")?;
        let name = self.name()?;
        self.expect_punct(":")?;
        let layer = match self.ident()?.as_str() {
            "frame" => Layer::Frame,
            "packet" => Layer::Packet,
            "shim" => Layer::Shim,
            other => return self.error(format!("unknown layer `{other}`")),
        };
        self.expect_punct("(")?;
        let kind = self.name()?;
        self.expect_punct(")")?;
        self.expect_punct("{")?;
        self.expect_kw("before")?;
        let event = self.name()?;
        self.expect_punct("(")?;
        let param = self.ident()?;
        self.expect_punct(")")?;
        self.expect_punct(";")?;
        let mut timing = None;
        if self.is_kw("within") {
            self.bump();
            let within_ms = self.int()?;
            self.expect_kw("after")?;
            let after = self.name()?;
            self.expect_punct(";")?;
            timing = Some(Timing { after, within_ms });
        }
        let mut requirements = Vec::new();
        while !self.eat_punct("}") {
            self.expect_kw("require")?;
            requirements.push(self.pred()?);
            self.expect_punct(";")?;
        }
        Ok(SpecComponent { name, layer, kind, event, param, requirements, timing })
    }
}

/// Parses a standalone predicate in the requirement surface syntax.
pub fn parse_predicate(src: &str) -> Result<Predicate, ParseError> {
    let mut p = Parser::new(src)?;
    let pred = p.pred()?;
    if !matches!(p.peek(), Tok::Eof) {
        return p.unexpected("end of predicate");
    }
    Ok(pred)
}

/// Parses a spec document. Structural validation is separate; see
/// [`ProtocolSpec::from_text`].
pub fn parse_spec(src: &str) -> Result<ProtocolSpec, ParseError> {
    Parser::new(src)?.spec()
}

impl ProtocolSpec {
    /// Parses and validates a spec document, reporting every problem found.
    pub fn from_text(src: &str) -> Result<ProtocolSpec, Vec<super::SpecError>> {
        let spec = parse_spec(src).map_err(|e| vec![e.into()])?;
        spec.validate()?;
        Ok(spec)
    }
}

// ---- printing -------------------------------------------------------------

fn print_bytes(out: &mut String, b: &[u8]) {
    out.push('"');
    for &c in b {
        match c {
            b'"' => out.push_str("\\\""),
            b'\\' => out.push_str("\\\\"),
            0x20..=0x7e => out.push(c as char),
            _ => {
                let _ = write!(out, "\\x{c:02x}");
            }
        }
    }
    out.push('"');
}

fn print_term(out: &mut String, t: &Term, param: &str) {
    match t {
        Term::Int(v) => {
            let _ = write!(out, "{v}");
        }
        Term::Bytes(b) => print_bytes(out, b),
        Term::Var(v) => out.push_str(v),
        Term::Field(FieldPath { field, access }) => {
            let _ = write!(out, "{param}.{field}");
            match access {
                Access::Whole => {}
                Access::End => out.push_str(".end"),
                Access::Index(at) => {
                    out.push_str(".value(");
                    print_term(out, at, param);
                    out.push(')');
                }
            }
        }
        Term::Arith(op, a, b) => {
            print_term(out, a, param);
            out.push_str(match op {
                ArithOp::Add => " + ",
                ArithOp::Sub => " - ",
            });
            if matches!(**b, Term::Arith(..)) {
                out.push('(');
                print_term(out, b, param);
                out.push(')');
            } else {
                print_term(out, b, param);
            }
        }
    }
}

// Precedence: 0 = exists (extends right), 1 = or, 2 = and, 3 = not, 4 = atom.
fn prec(p: &Predicate) -> u8 {
    match p {
        Predicate::ExistsIndex { .. } => 0,
        Predicate::Or(..) => 1,
        Predicate::And(..) => 2,
        Predicate::Not(_) => 3,
        Predicate::Bool(_) | Predicate::Cmp { .. } => 4,
    }
}

fn print_sub(out: &mut String, p: &Predicate, param: &str, min: u8) {
    if prec(p) < min {
        out.push('(');
        print_pred(out, p, param);
        out.push(')');
    } else {
        print_pred(out, p, param);
    }
}

fn print_pred(out: &mut String, p: &Predicate, param: &str) {
    match p {
        Predicate::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Predicate::Cmp { op, lhs, rhs } => {
            print_term(out, lhs, param);
            let _ = write!(out, " {} ", op.symbol());
            print_term(out, rhs, param);
        }
        Predicate::And(a, b) => {
            print_sub(out, a, param, 2);
            out.push_str(" & ");
            print_sub(out, b, param, 3);
        }
        Predicate::Or(a, b) => {
            print_sub(out, a, param, 1);
            out.push_str(" | ");
            print_sub(out, b, param, 2);
        }
        Predicate::Not(a) => {
            out.push('~');
            print_sub(out, a, param, 3);
        }
        Predicate::ExistsIndex { var, inclusive, upper, body } => {
            let _ = write!(out, "exists {var}. {var} {} ", if *inclusive { "<=" } else { "<" });
            print_term(out, upper, param);
            out.push_str(" & ");
            // The body's left spine is re-split at parse time, so only a
            // top-level disjunction or exists needs brackets.
            print_sub(out, body, param, 2);
        }
    }
}

/// Renders a predicate in the surface syntax, naming the subject `param`.
pub fn print_predicate(p: &Predicate, param: &str) -> String {
    let mut out = String::new();
    print_pred(&mut out, p, param);
    out
}

/// Renders a spec document; `parse_spec(print_spec(s)) == s`.
pub fn print_spec(spec: &ProtocolSpec) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "protocol {};", spec.name);
    for p in &spec.parts {
        let _ = writeln!(out, "part {p};");
    }
    for ks in &spec.schema {
        let _ = writeln!(out, "\nschema {} {{", ks.kind);
        for f in &ks.fields {
            let ty = match f.ty {
                FieldType::Bytes { max_len } => format!("bytes[{max_len}]"),
                FieldType::UInt { bits } => format!("u{bits}"),
            };
            let _ = writeln!(out, "    {}: {ty};", f.name);
        }
        out.push_str("}\n");
    }
    for c in &spec.components {
        let _ = writeln!(out, "\ncomponent {} : {}({}) {{", c.name, c.layer.as_str(), c.kind);
        let _ = writeln!(out, "    before {}({});", c.event, c.param);
        if let Some(t) = &c.timing {
            let _ = writeln!(out, "    within {} after {};", t.within_ms, t.after);
        }
        for r in &c.requirements {
            let _ = writeln!(out, "    require {};", print_predicate(r, &c.param));
        }
        out.push_str("}\n");
    }
    if !spec.guarantees.is_empty() {
        out.push('\n');
    }
    for g in &spec.guarantees {
        let _ = writeln!(out, "guarantee {} -> {};", g.from, g.to);
    }
    if !spec.bridges.is_empty() {
        out.push('\n');
    }
    for b in &spec.bridges {
        let _ = writeln!(out, "bridge {} -> {};", b.from_event, b.to_event);
    }
    out
}
