//! `drl-mini`: a small DRL-flavoured rule dialect.
//!
//! ```text
//! doc        := (decl | rule)*
//! decl       := "declare" IDENT (IDENT ":" ("string"|"integer"|"boolean"))+ "end"
//! rule       := "rule" STRING "when" pattern+ "then" action+ "end"
//! pattern    := IDENT "(" [constraint ("," constraint)*] ")"
//! constraint := IDENT ":" VAR | IDENT OP (literal | VAR)
//! action     := "insert" IDENT "(" IDENT ":" (literal | VAR) ("," IDENT ":" (literal | VAR))* ")" ";"
//! OP         := "==" | "!=" | "<" | "<=" | ">" | ">="
//! VAR        := "$" IDENT
//! literal    := STRING | INT | "true" | "false"
//! ```
//!
//! Line comments start with `//`. Whitespace is free-form.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use crate::diag::{Code, Diagnostic, Position};
use crate::ir::{is_identifier, CmpOp, FactType, Guard, RuleIr, SlotDecl, SlotKind, Term, Value, Var};
use crate::lower::{quote, Cursor, Document, RuleBuilder, RuleOutcome};

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Str(String),
    Int(i64),
    Var(String),
    LParen,
    RParen,
    Comma,
    Colon,
    Semi,
    Op(CmpOp),
    Error(String),
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Str(s) => quote(s),
            Tok::Int(n) => n.to_string(),
            Tok::Var(v) => format!("`${v}`"),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Colon => "`:`".into(),
            Tok::Semi => "`;`".into(),
            Tok::Op(op) => format!("`{op}`"),
            Tok::Error(e) => e.clone(),
            Tok::Eof => "end of input".into(),
        }
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self, Tok::Ident(s) if s == kw)
    }
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    pos: Position,
    start: usize,
    end: usize,
}

fn lex(src: &str) -> Vec<Token> {
    let mut cur = Cursor::new(src);
    let mut out = Vec::new();
    loop {
        cur.eat_while(char::is_whitespace);
        if cur.peek() == Some('/') && cur.peek2() == Some('/') {
            cur.eat_while(|c| c != '\n');
            continue;
        }
        let pos = cur.position();
        let start = cur.offset;
        let Some(c) = cur.peek() else {
            out.push(Token { tok: Tok::Eof, pos, start, end: start });
            return out;
        };
        let tok = match c {
            '(' | ')' | ',' | ':' | ';' => {
                cur.bump();
                match c {
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    ',' => Tok::Comma,
                    ':' => Tok::Colon,
                    _ => Tok::Semi,
                }
            }
            '"' => {
                cur.bump();
                match cur.string_body() {
                    Some(s) => Tok::Str(s),
                    None => Tok::Error("unterminated string literal".into()),
                }
            }
            '$' => {
                cur.bump();
                let name = cur.eat_while(|c| c.is_ascii_alphanumeric() || c == '_');
                if is_identifier(name) {
                    Tok::Var(name.to_owned())
                } else {
                    Tok::Error("expected variable name after `$`".into())
                }
            }
            '=' | '!' | '<' | '>' => {
                cur.bump();
                let eq = cur.peek() == Some('=');
                if eq {
                    cur.bump();
                }
                match (c, eq) {
                    ('=', true) => Tok::Op(CmpOp::Eq),
                    ('!', true) => Tok::Op(CmpOp::Ne),
                    ('<', false) => Tok::Op(CmpOp::Lt),
                    ('<', true) => Tok::Op(CmpOp::Le),
                    ('>', false) => Tok::Op(CmpOp::Gt),
                    ('>', true) => Tok::Op(CmpOp::Ge),
                    _ => Tok::Error(format!("unexpected character `{c}`")),
                }
            }
            c if c.is_ascii_digit() || (c == '-' && cur.peek2().is_some_and(|d| d.is_ascii_digit())) => {
                cur.bump();
                cur.eat_while(|c| c.is_ascii_digit());
                let text = &src[start..cur.offset];
                if cur.peek().is_some_and(|c| c.is_ascii_alphabetic() || c == '_') {
                    cur.eat_while(|c| c.is_ascii_alphanumeric() || c == '_');
                    Tok::Error(format!("malformed number `{}`", &src[start..cur.offset]))
                } else {
                    match text.parse() {
                        Ok(n) => Tok::Int(n),
                        Err(_) => Tok::Error(format!("integer literal `{text}` out of range")),
                    }
                }
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                Tok::Ident(cur.eat_while(|c| c.is_ascii_alphanumeric() || c == '_').to_owned())
            }
            c => {
                cur.bump();
                Tok::Error(format!("unexpected character `{c}`"))
            }
        };
        let unterminated = matches!(&tok, Tok::Error(e) if e.starts_with("unterminated"));
        out.push(Token { tok, pos, start, end: cur.offset });
        if unterminated {
            let pos = cur.position();
            out.push(Token { tok: Tok::Eof, pos, start: cur.offset, end: cur.offset });
            return out;
        }
    }
}

type PResult<T> = Result<T, Diagnostic>;

struct Parser<'a> {
    src: &'a str,
    toks: Vec<Token>,
    at: usize,
}

enum RawOperand {
    Lit(Value),
    Var(String),
}

struct RawConstraint {
    slot: String,
    slot_pos: Position,
    op: CmpOp,
    operand: RawOperand,
}

struct RawPattern {
    type_name: String,
    pos: Position,
    constraints: Vec<RawConstraint>,
}

struct RawAction {
    type_name: String,
    pos: Position,
    values: Vec<(String, Position, RawOperand)>,
}

struct RawRule {
    name: String,
    patterns: Vec<RawPattern>,
    actions: Vec<RawAction>,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Parser { src, toks: lex(src), at: 0 }
    }

    fn peek(&self) -> &Token {
        &self.toks[self.at]
    }

    fn next(&mut self) -> Token {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn unexpected(&self, expected: &str) -> Diagnostic {
        let t = self.peek();
        let detail = match &t.tok {
            Tok::Error(e) => e.clone(),
            other => format!("expected {expected}, found {}", other.describe()),
        };
        Diagnostic::grammar(detail, t.pos)
    }

    fn expect(&mut self, want: Tok, what: &str) -> PResult<Token> {
        if self.peek().tok == want {
            Ok(self.next())
        } else {
            Err(self.unexpected(what))
        }
    }

    fn keyword(&mut self, kw: &str) -> PResult<Token> {
        if self.peek().tok.is_keyword(kw) {
            Ok(self.next())
        } else {
            Err(self.unexpected(&format!("`{kw}`")))
        }
    }

    fn ident(&mut self, what: &str) -> PResult<(String, Position)> {
        match &self.peek().tok {
            Tok::Ident(s) => {
                let s = s.clone();
                let pos = self.next().pos;
                Ok((s, pos))
            }
            _ => Err(self.unexpected(what)),
        }
    }

    fn operand(&mut self) -> PResult<RawOperand> {
        let t = self.peek().clone();
        let op = match t.tok {
            Tok::Str(s) => RawOperand::Lit(Value::Str(s)),
            Tok::Int(n) => RawOperand::Lit(Value::Int(n)),
            Tok::Ident(ref s) if s == "true" => RawOperand::Lit(Value::Bool(true)),
            Tok::Ident(ref s) if s == "false" => RawOperand::Lit(Value::Bool(false)),
            Tok::Var(v) => RawOperand::Var(v),
            _ => return Err(self.unexpected("a literal or variable")),
        };
        self.next();
        Ok(op)
    }

    /// Skips to the next top-level `declare` or `rule` after the block
    /// starting at token index `start`.
    fn recover(&mut self, start: usize) {
        if self.at == start {
            self.next();
        }
        while !matches!(self.peek().tok, Tok::Eof) && !self.peek().tok.is_keyword("declare") && !self.peek().tok.is_keyword("rule") {
            self.next();
        }
    }

    fn declaration(&mut self) -> PResult<FactType> {
        self.keyword("declare")?;
        let (name, _) = self.ident("a type name")?;
        let mut slots: Vec<SlotDecl> = Vec::new();
        while !self.peek().tok.is_keyword("end") {
            let (slot, pos) = self.ident("a slot name or `end`")?;
            self.expect(Tok::Colon, "`:`")?;
            let kind = match &self.peek().tok {
                Tok::Ident(k) if k == "string" => SlotKind::String,
                Tok::Ident(k) if k == "integer" => SlotKind::Integer,
                Tok::Ident(k) if k == "boolean" => SlotKind::Boolean,
                _ => return Err(self.unexpected("`string`, `integer` or `boolean`")),
            };
            self.next();
            if slots.iter().any(|s| s.name == slot) {
                return Err(Diagnostic::grammar(format!("duplicate slot {slot} in {name}"), pos));
            }
            slots.push(SlotDecl { name: slot, kind });
        }
        if slots.is_empty() {
            return Err(self.unexpected("a slot declaration"));
        }
        self.keyword("end")?;
        Ok(FactType { name, slots })
    }

    fn rule_header(&mut self) -> PResult<String> {
        self.keyword("rule")?;
        match &self.peek().tok {
            Tok::Str(s) => {
                let s = s.clone();
                self.next();
                Ok(s)
            }
            _ => Err(self.unexpected("a quoted rule name")),
        }
    }

    fn rule_body(&mut self, name: String) -> PResult<RawRule> {
        self.keyword("when")?;
        let mut patterns = Vec::new();
        while !self.peek().tok.is_keyword("then") {
            patterns.push(self.pattern()?);
        }
        if patterns.is_empty() {
            return Err(Diagnostic::grammar("rule condition has no patterns", self.peek().pos));
        }
        self.keyword("then")?;
        let mut actions = Vec::new();
        while !self.peek().tok.is_keyword("end") {
            actions.push(self.action()?);
        }
        if actions.is_empty() {
            return Err(Diagnostic::grammar("rule has no actions", self.peek().pos));
        }
        self.keyword("end")?;
        Ok(RawRule { name, patterns, actions })
    }

    fn pattern(&mut self) -> PResult<RawPattern> {
        let (type_name, pos) = self.ident("a pattern or `then`")?;
        self.expect(Tok::LParen, "`(`")?;
        let mut constraints = Vec::new();
        if self.peek().tok != Tok::RParen {
            loop {
                constraints.push(self.constraint()?);
                if self.peek().tok == Tok::Comma {
                    self.next();
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::RParen, "`,` or `)`")?;
        Ok(RawPattern { type_name, pos, constraints })
    }

    fn constraint(&mut self) -> PResult<RawConstraint> {
        let (slot, slot_pos) = self.ident("a slot name")?;
        match self.peek().tok.clone() {
            Tok::Colon => {
                self.next();
                match &self.peek().tok {
                    Tok::Var(v) => {
                        let v = v.clone();
                        self.next();
                        Ok(RawConstraint { slot, slot_pos, op: CmpOp::Eq, operand: RawOperand::Var(v) })
                    }
                    _ => Err(self.unexpected("a variable")),
                }
            }
            Tok::Op(op) => {
                self.next();
                let operand = self.operand()?;
                Ok(RawConstraint { slot, slot_pos, op, operand })
            }
            _ => Err(self.unexpected("`:` or a comparison operator")),
        }
    }

    fn action(&mut self) -> PResult<RawAction> {
        self.keyword("insert")?;
        let (type_name, pos) = self.ident("a fact type")?;
        self.expect(Tok::LParen, "`(`")?;
        let mut values = Vec::new();
        loop {
            let (slot, spos) = self.ident("a slot name")?;
            self.expect(Tok::Colon, "`:`")?;
            values.push((slot, spos, self.operand()?));
            if self.peek().tok == Tok::Comma {
                self.next();
            } else {
                break;
            }
        }
        self.expect(Tok::RParen, "`,` or `)`")?;
        self.expect(Tok::Semi, "`;`")?;
        Ok(RawAction { type_name, pos, values })
    }
}

fn operand_term(op: RawOperand) -> Term {
    match op {
        RawOperand::Lit(v) => Term::Const(v),
        RawOperand::Var(v) => Term::Var(Var::user(v)),
    }
}

fn lower(raw: RawRule, types: Option<&[FactType]>, pos: Position) -> Result<RuleIr, Vec<Diagnostic>> {
    let mut user_vars = HashSet::new();
    for p in &raw.patterns {
        for c in &p.constraints {
            if let RawOperand::Var(v) = &c.operand {
                user_vars.insert(v.clone());
            }
        }
    }
    let mut b = RuleBuilder::new(raw.name, user_vars);
    for p in raw.patterns {
        b.begin_pattern(&p.type_name, p.pos);
        for c in p.constraints {
            b.constrain(&c.slot, c.op, operand_term(c.operand), c.slot_pos);
        }
    }
    for a in raw.actions {
        b.begin_action(&a.type_name, a.pos);
        for (slot, spos, v) in a.values {
            b.action_slot(&slot, operand_term(v), spos);
        }
    }
    b.finish(types, pos)
}

/// Parses a whole document. Rule blocks are checked against `types` plus
/// the document's own declarations; when `types` is `None` and the document
/// declares nothing, only the type-independent checks run.
pub fn parse_document(text: &str, types: Option<&[FactType]>) -> Document {
    let mut p = Parser::new(text);
    let mut doc = Document::default();
    let mut raw_rules: Vec<(Option<String>, Position, usize, usize, PResult<RawRule>)> = Vec::new();
    loop {
        let t = p.peek().clone();
        let start = p.at;
        match &t.tok {
            Tok::Eof => break,
            Tok::Ident(k) if k == "declare" => match p.declaration() {
                Ok(ft) => {
                    if doc.types.iter().any(|x| x.name == ft.name) {
                        doc.declaration_diagnostics.push(Diagnostic::grammar(format!("duplicate type {}", ft.name), t.pos));
                    } else {
                        doc.types.push(ft);
                    }
                }
                Err(d) => {
                    doc.declaration_diagnostics.push(d);
                    p.recover(start);
                }
            },
            Tok::Ident(k) if k == "rule" => {
                let mut name = None;
                let res = p.rule_header().and_then(|n| {
                    name = Some(n.clone());
                    p.rule_body(n)
                });
                if res.is_err() {
                    p.recover(start);
                    // the block ends where the next one starts
                    let end = p.peek().start;
                    raw_rules.push((name, t.pos, t.start, end, res));
                } else {
                    let end = p.toks[p.at - 1].end;
                    raw_rules.push((name, t.pos, t.start, end, res));
                }
            }
            _ => {
                doc.structure_diagnostics.push(p.unexpected("`declare` or `rule`"));
                p.recover(start);
            }
        }
    }
    let combined: Option<Vec<FactType>> = match types {
        Some(ts) => Some(ts.iter().chain(doc.types.iter()).cloned().collect()),
        None if !doc.types.is_empty() => Some(doc.types.clone()),
        None => None,
    };
    for (index, (name, pos, start, end, res)) in raw_rules.into_iter().enumerate() {
        let result = match res {
            Ok(raw) => lower(raw, combined.as_deref(), pos),
            Err(d) => Err(vec![d]),
        };
        doc.rules.push(RuleOutcome {
            name,
            index,
            position: pos,
            source: p.src[start..end].trim_end().to_owned(),
            result,
        });
    }
    doc
}

/// Parses the `declare` blocks of `text`; rule blocks are ignored.
pub fn parse_declarations(text: &str) -> (Vec<FactType>, Vec<Diagnostic>) {
    let doc = parse_document(text, None);
    let mut diags = doc.structure_diagnostics;
    diags.extend(doc.declaration_diagnostics);
    (doc.types, diags)
}

/// Parses and lowers the rule blocks of `text` into canonical IR. Rules with
/// problems are omitted from the list; their diagnostics are returned.
pub fn parse_rules(text: &str, types: &[FactType]) -> (Vec<RuleIr>, Vec<Diagnostic>) {
    let doc = parse_document(text, Some(types));
    let mut diags = doc.structure_diagnostics;
    diags.extend(doc.declaration_diagnostics);
    let mut rules = Vec::new();
    for r in doc.rules {
        match r.result {
            Ok(ir) => rules.push(ir),
            Err(d) => diags.extend(d),
        }
    }
    (rules, diags)
}

fn literal(v: &Value) -> String {
    match v {
        Value::Str(s) => quote(s),
        Value::Int(n) => n.to_string(),
        Value::Bool(b) => b.to_string(),
    }
}

fn term(t: &Term) -> String {
    match t {
        Term::Const(v) => literal(v),
        Term::Var(v) => format!("${}", v.name),
    }
}

/// Prints a canonical, checked rule. Guards are written inline on the
/// pattern slot that first binds their left-hand variable; synthetic
/// variables are not named when an ordering constraint can introduce them.
pub fn print_rule(rule: &RuleIr) -> Result<String, Diagnostic> {
    let bound = rule.bound_vars();
    if let Some(g) = rule.guards.iter().find(|g| !bound.contains(g.lhs.name.as_str())) {
        return Err(Diagnostic::new(Code::EUnprintable, format!("guard variable {} is not bound", g.lhs.name)));
    }
    let mut guards_of: BTreeMap<&str, Vec<&Guard>> = BTreeMap::new();
    for g in &rule.guards {
        guards_of.entry(&g.lhs.name).or_default().push(g);
    }
    let mut homed: HashSet<&str> = HashSet::new();

    let mut out = String::new();
    writeln!(out, "rule {}", quote(&rule.name)).unwrap();
    out.push_str("when\n");
    for p in &rule.patterns {
        let mut parts: Vec<String> = Vec::new();
        let slots: std::collections::BTreeSet<&String> = p.slot_eq.keys().chain(p.slot_bind.keys()).collect();
        for slot in slots {
            if let Some(v) = p.slot_eq.get(slot) {
                parts.push(format!("{slot} == {}", literal(v)));
                continue;
            }
            let var = &p.slot_bind[slot];
            if !homed.insert(&var.name) {
                parts.push(format!("{slot} : ${}", var.name));
                continue;
            }
            let mut gs: Vec<&Guard> = guards_of.get(var.name.as_str()).cloned().unwrap_or_default();
            // `slot == $w` on a synthetic binding would re-parse as a
            // substitution, so such variables keep their explicit binding.
            let joins = gs.iter().any(|g| g.op == CmpOp::Eq && g.rhs.as_var().is_some());
            let opener = if var.synthetic && !joins { gs.iter().position(|g| g.op != CmpOp::Eq) } else { None };
            match opener {
                Some(i) => {
                    let g = gs.remove(i);
                    gs.insert(0, g);
                }
                None => parts.push(format!("{slot} : ${}", var.name)),
            }
            for g in gs {
                parts.push(format!("{slot} {} {}", g.op, term(&g.rhs)));
            }
        }
        writeln!(out, "  {}({})", p.type_name, parts.join(", ")).unwrap();
    }
    out.push_str("then\n");
    for a in &rule.actions {
        let vals: Vec<String> = a.values.iter().map(|(s, t)| format!("{s}: {}", term(t))).collect();
        writeln!(out, "  insert {}({});", a.type_name, vals.join(", ")).unwrap();
    }
    out.push_str("end\n");
    Ok(out)
}

pub fn print_declarations(types: &[FactType]) -> String {
    let mut out = String::new();
    for t in types {
        writeln!(out, "declare {}", t.name).unwrap();
        for s in &t.slots {
            writeln!(out, "  {}: {}", s.name, s.kind).unwrap();
        }
        out.push_str("end\n");
    }
    out
}
