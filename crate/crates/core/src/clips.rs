//! `clips-mini`: a CLIPS/Jess-flavoured s-expression rule dialect.
//!
//! Top-level forms are `deftemplate` and `defrule`. Comments run from `;` to
//! the end of the line, variables are written `?name`, strings are
//! double-quoted with `\"` escapes, booleans are `TRUE`/`FALSE`.
//!
//! ```text
//! (deftemplate Person (slot name (type STRING)) (slot age (type INTEGER)))
//! (defrule adult
//!   (Person (age ?a) (name ?n))
//!   (test (>= ?a 18))
//!   =>
//!   (assert (Adult (name ?n))))
//! ```
//!
//! A `(not …)` conditional element parses, but has no counterpart in the
//! neutral form; lowering reports `E_UNSUPPORTED`.

use std::collections::HashSet;
use std::fmt::{self, Write as _};

use crate::diag::{Code, Diagnostic, Position};
use crate::ir::{is_identifier, CmpOp, FactType, Guard, RuleIr, SlotDecl, SlotKind, Term, Value, Var};
use crate::lower::{quote, Cursor, Document, RuleBuilder, RuleOutcome};

/// Concrete syntax tree. String atoms keep their quotes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SExpr {
    Atom { token: String, pos: Position },
    List { children: Vec<SExpr>, pos: Position, close: Position, span: (usize, usize) },
}

impl SExpr {
    pub fn pos(&self) -> Position {
        match self {
            SExpr::Atom { pos, .. } | SExpr::List { pos, .. } => *pos,
        }
    }

    fn atom(&self) -> Option<&str> {
        match self {
            SExpr::Atom { token, .. } => Some(token),
            SExpr::List { .. } => None,
        }
    }

    fn head(&self) -> Option<&str> {
        match self {
            SExpr::List { children, .. } => children.first().and_then(SExpr::atom),
            SExpr::Atom { .. } => None,
        }
    }
}

impl fmt::Display for SExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SExpr::Atom { token, .. } => f.write_str(token),
            SExpr::List { children, .. } => {
                f.write_str("(")?;
                for (i, c) in children.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" ")?;
                    }
                    write!(f, "{c}")?;
                }
                f.write_str(")")
            }
        }
    }
}

fn is_delim(c: char) -> bool {
    c.is_whitespace() || matches!(c, '(' | ')' | '"' | ';')
}

/// Parses `text` into top-level s-expressions. Fails on unbalanced
/// parentheses or an unterminated string.
pub fn parse_sexprs(text: &str) -> Result<Vec<SExpr>, Diagnostic> {
    let mut cur = Cursor::new(text);
    // (children, open position, open offset)
    let mut stack: Vec<(Vec<SExpr>, Position, usize)> = Vec::new();
    let mut top = Vec::new();
    loop {
        cur.eat_while(char::is_whitespace);
        let pos = cur.position();
        let start = cur.offset;
        let Some(c) = cur.peek() else { break };
        let item = match c {
            ';' => {
                cur.eat_while(|c| c != '\n');
                continue;
            }
            '(' => {
                cur.bump();
                stack.push((Vec::new(), pos, start));
                continue;
            }
            ')' => {
                cur.bump();
                let Some((children, open, open_off)) = stack.pop() else {
                    return Err(Diagnostic::grammar("unbalanced `)`", pos));
                };
                SExpr::List { children, pos: open, close: pos, span: (open_off, cur.offset) }
            }
            '"' => {
                cur.bump();
                if cur.string_body().is_none() {
                    return Err(Diagnostic::grammar("unterminated string literal", pos));
                }
                SExpr::Atom { token: text[start..cur.offset].to_owned(), pos }
            }
            _ => SExpr::Atom { token: cur.eat_while(|c| !is_delim(c)).to_owned(), pos },
        };
        match stack.last_mut() {
            Some((children, _, _)) => children.push(item),
            None => top.push(item),
        }
    }
    if let Some((_, open, _)) = stack.pop() {
        return Err(Diagnostic::grammar("unclosed `(`", open));
    }
    Ok(top)
}

fn unquote(token: &str) -> String {
    let mut cur = Cursor::new(&token[1..]);
    cur.string_body().unwrap_or_default()
}

enum Operand {
    Lit(Value),
    Var(String),
}

fn operand(e: &SExpr) -> Result<Operand, Diagnostic> {
    let bad = |what: &str| Diagnostic::grammar(format!("expected a literal or variable, found {what}"), e.pos());
    let Some(tok) = e.atom() else { return Err(bad("a list")) };
    if let Some(name) = tok.strip_prefix('?') {
        return if is_identifier(name) {
            Ok(Operand::Var(name.to_owned()))
        } else {
            Err(Diagnostic::grammar(format!("malformed variable `{tok}`"), e.pos()))
        };
    }
    if tok.starts_with('"') {
        return Ok(Operand::Lit(Value::Str(unquote(tok))));
    }
    match tok {
        "TRUE" => return Ok(Operand::Lit(Value::Bool(true))),
        "FALSE" => return Ok(Operand::Lit(Value::Bool(false))),
        _ => {}
    }
    let digits = tok.strip_prefix('-').unwrap_or(tok);
    if !digits.is_empty() && digits.chars().all(|c| c.is_ascii_digit()) {
        return tok
            .parse()
            .map(|n| Operand::Lit(Value::Int(n)))
            .map_err(|_| Diagnostic::grammar(format!("integer literal `{tok}` out of range"), e.pos()));
    }
    Err(bad(&format!("`{tok}`")))
}

fn term(op: Operand) -> Term {
    match op {
        Operand::Lit(v) => Term::Const(v),
        Operand::Var(v) => Term::Var(Var::user(v)),
    }
}

fn ident_atom(e: &SExpr, what: &str) -> Result<String, Diagnostic> {
    match e.atom() {
        Some(t) if is_identifier(t) => Ok(t.to_owned()),
        _ => Err(Diagnostic::grammar(format!("expected {what}, found `{e}`"), e.pos())),
    }
}

fn list_parts(e: &SExpr) -> Option<(&[SExpr], Position)> {
    match e {
        SExpr::List { children, close, .. } => Some((children, *close)),
        SExpr::Atom { .. } => None,
    }
}

fn declaration(children: &[SExpr], close: Position) -> Result<FactType, Diagnostic> {
    let name_expr = children.get(1).ok_or_else(|| Diagnostic::grammar("expected a template name", close))?;
    let name = ident_atom(name_expr, "a template name")?;
    let mut rest = &children[2..];
    if rest.first().and_then(SExpr::atom).is_some_and(|t| t.starts_with('"')) {
        rest = &rest[1..];
    }
    if rest.is_empty() {
        return Err(Diagnostic::grammar("template declares no slots", close));
    }
    let mut slots: Vec<SlotDecl> = Vec::new();
    for s in rest {
        let bad = || Diagnostic::grammar(format!("expected `(slot NAME (type KIND))`, found `{s}`"), s.pos());
        let (parts, _) = list_parts(s).ok_or_else(bad)?;
        if s.head() != Some("slot") || parts.len() != 3 {
            return Err(bad());
        }
        let slot = ident_atom(&parts[1], "a slot name")?;
        let (ty, _) = list_parts(&parts[2]).ok_or_else(bad)?;
        if parts[2].head() != Some("type") || ty.len() != 2 {
            return Err(bad());
        }
        let kind = match ty[1].atom() {
            Some("STRING") => SlotKind::String,
            Some("INTEGER") => SlotKind::Integer,
            Some("BOOLEAN") => SlotKind::Boolean,
            _ => {
                return Err(Diagnostic::grammar(
                    format!("expected STRING, INTEGER or BOOLEAN, found `{}`", ty[1]),
                    ty[1].pos(),
                ))
            }
        };
        if slots.iter().any(|x| x.name == slot) {
            return Err(Diagnostic::grammar(format!("duplicate slot {slot} in {name}"), parts[1].pos()));
        }
        slots.push(SlotDecl { name: slot, kind });
    }
    Ok(FactType { name, slots })
}

fn collect_vars(e: &SExpr, out: &mut HashSet<String>) {
    match e {
        SExpr::Atom { token, .. } => {
            if let Some(n) = token.strip_prefix('?') {
                out.insert(n.to_owned());
            }
        }
        SExpr::List { children, .. } => children.iter().for_each(|c| collect_vars(c, out)),
    }
}

fn test_op(tok: &str) -> Option<CmpOp> {
    Some(match tok {
        "eq" | "=" => CmpOp::Eq,
        "neq" | "<>" => CmpOp::Ne,
        "<" => CmpOp::Lt,
        "<=" => CmpOp::Le,
        ">" => CmpOp::Gt,
        ">=" => CmpOp::Ge,
        _ => return None,
    })
}

fn pattern_slots(b: &mut RuleBuilder, ce: &SExpr) -> Result<(), Diagnostic> {
    let (parts, _) = list_parts(ce).expect("pattern is a list");
    let ty = ident_atom(&parts[0], "a fact type")?;
    b.begin_pattern(&ty, ce.pos());
    for s in &parts[1..] {
        let bad = || Diagnostic::grammar(format!("expected `(slot value)`, found `{s}`"), s.pos());
        let (sp, _) = list_parts(s).ok_or_else(bad)?;
        if sp.len() != 2 {
            return Err(bad());
        }
        let slot = ident_atom(&sp[0], "a slot name")?;
        b.constrain(&slot, CmpOp::Eq, term(operand(&sp[1])?), sp[0].pos());
    }
    Ok(())
}

fn check_pattern_syntax(ce: &SExpr) -> Result<(), Diagnostic> {
    let mut scratch = RuleBuilder::new(String::new(), HashSet::new());
    match list_parts(ce) {
        Some((parts, close)) if parts.is_empty() => Err(Diagnostic::grammar("empty conditional element", close)),
        Some(_) => pattern_slots(&mut scratch, ce),
        None => Err(Diagnostic::grammar(format!("expected a pattern, found `{ce}`"), ce.pos())),
    }
}

fn test_guard(b: &mut RuleBuilder, ce: &SExpr) -> Result<(), Diagnostic> {
    let (parts, close) = list_parts(ce).expect("test is a list");
    let bad = |at: Position| Diagnostic::grammar("expected `(test (OP ?var value))`", at);
    let expr = parts.get(1).ok_or_else(|| bad(close))?;
    if parts.len() != 2 {
        return Err(bad(parts[2].pos()));
    }
    let (e, eclose) = list_parts(expr).ok_or_else(|| bad(expr.pos()))?;
    let op_expr = e.first().ok_or_else(|| bad(eclose))?;
    let op = op_expr
        .atom()
        .and_then(test_op)
        .ok_or_else(|| Diagnostic::grammar(format!("unknown comparison `{op_expr}`"), op_expr.pos()))?;
    if e.len() != 3 {
        return Err(bad(expr.pos()));
    }
    let (a, c) = (operand(&e[1])?, operand(&e[2])?);
    let guard = match (a, c) {
        (Operand::Var(v), rhs) => Guard { lhs: Var::user(v), op, rhs: term(rhs) },
        (Operand::Lit(l), Operand::Var(v)) => Guard { lhs: Var::user(v), op: op.flipped(), rhs: Term::Const(l) },
        (Operand::Lit(_), Operand::Lit(_)) => {
            return Err(Diagnostic::grammar("test must reference a variable", expr.pos()))
        }
    };
    b.guard(guard, ce.pos());
    Ok(())
}

fn rule(children: &[SExpr], close: Position, types: Option<&[FactType]>, pos: Position) -> (Option<String>, Result<RuleIr, Vec<Diagnostic>>) {
    let Some(name_expr) = children.get(1) else {
        return (None, Err(vec![Diagnostic::grammar("expected a rule name", close)]));
    };
    let name = match name_expr.atom() {
        Some(t) if is_rule_symbol(t) => t.to_owned(),
        _ => return (None, Err(vec![Diagnostic::grammar(format!("expected a rule name, found `{name_expr}`"), name_expr.pos())])),
    };
    let result = rule_body(name.clone(), &children[2..], close, types, pos);
    (Some(name), result)
}

fn rule_body(name: String, mut rest: &[SExpr], close: Position, types: Option<&[FactType]>, pos: Position) -> Result<RuleIr, Vec<Diagnostic>> {
    if rest.first().and_then(SExpr::atom).is_some_and(|t| t.starts_with('"')) {
        rest = &rest[1..];
    }
    let arrow = rest
        .iter()
        .position(|e| e.atom() == Some("=>"))
        .ok_or_else(|| vec![Diagnostic::grammar("expected `=>`", close)])?;
    let (lhs, rhs) = (&rest[..arrow], &rest[arrow + 1..]);
    if lhs.is_empty() {
        return Err(vec![Diagnostic::grammar("rule condition has no patterns", rest[arrow].pos())]);
    }
    if rhs.is_empty() {
        return Err(vec![Diagnostic::grammar("rule has no actions", close)]);
    }

    let mut vars = HashSet::new();
    lhs.iter().for_each(|e| collect_vars(e, &mut vars));
    let mut b = RuleBuilder::new(name, vars);
    let mut unsupported = Vec::new();
    for ce in lhs {
        match ce.head() {
            Some("test") => test_guard(&mut b, ce).map_err(|d| vec![d])?,
            Some("not") => {
                let (parts, pclose) = list_parts(ce).expect("list");
                match parts.get(1) {
                    Some(inner) if parts.len() == 2 => check_pattern_syntax(inner).map_err(|d| vec![d])?,
                    _ => return Err(vec![Diagnostic::grammar("expected `(not PATTERN)`", pclose)]),
                }
                unsupported.push(
                    Diagnostic::new(Code::EUnsupported, "`not` conditional element (negation) has no neutral-form counterpart")
                        .at(ce.pos()),
                );
            }
            Some(_) => pattern_slots(&mut b, ce).map_err(|d| vec![d])?,
            None => {
                let d = match list_parts(ce) {
                    Some((parts, pclose)) if parts.is_empty() => Diagnostic::grammar("empty conditional element", pclose),
                    _ => Diagnostic::grammar(format!("expected a conditional element, found `{ce}`"), ce.pos()),
                };
                return Err(vec![d]);
            }
        }
    }
    for act in rhs {
        let bad = || vec![Diagnostic::grammar(format!("expected `(assert FACT+)`, found `{act}`"), act.pos())];
        let (parts, aclose) = list_parts(act).ok_or_else(bad)?;
        if act.head() != Some("assert") {
            return Err(bad());
        }
        if parts.len() < 2 {
            return Err(vec![Diagnostic::grammar("assert needs at least one fact", aclose)]);
        }
        for fact in &parts[1..] {
            let bad = || vec![Diagnostic::grammar(format!("expected `(Type (slot value)+)`, found `{fact}`"), fact.pos())];
            let (fp, fclose) = list_parts(fact).ok_or_else(bad)?;
            let ty = ident_atom(fp.first().ok_or_else(bad)?, "a fact type").map_err(|d| vec![d])?;
            if fp.len() < 2 {
                return Err(vec![Diagnostic::grammar("asserted fact has no slots", fclose)]);
            }
            b.begin_action(&ty, fact.pos());
            for s in &fp[1..] {
                let bad = || vec![Diagnostic::grammar(format!("expected `(slot value)`, found `{s}`"), s.pos())];
                let (sp, _) = list_parts(s).ok_or_else(bad)?;
                if sp.len() != 2 {
                    return Err(bad());
                }
                let slot = ident_atom(&sp[0], "a slot name").map_err(|d| vec![d])?;
                b.action_slot(&slot, term(operand(&sp[1]).map_err(|d| vec![d])?), sp[0].pos());
            }
        }
    }
    if !unsupported.is_empty() {
        return Err(unsupported);
    }
    b.finish(types, pos)
}

/// Rule names are printed as bare symbols.
pub fn is_rule_symbol(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

/// Parses a whole document; see [`crate::drl::parse_document`] for the
/// type-context rules.
pub fn parse_document(text: &str, types: Option<&[FactType]>) -> Document {
    let mut doc = Document::default();
    let forms = match parse_sexprs(text) {
        Ok(f) => f,
        Err(d) => {
            doc.structure_diagnostics.push(d);
            return doc;
        }
    };
    let mut rule_forms = Vec::new();
    for form in &forms {
        match (form.head(), list_parts(form)) {
            (Some("deftemplate"), Some((children, close))) => match declaration(children, close) {
                Ok(ft) if doc.types.iter().any(|t| t.name == ft.name) => doc
                    .declaration_diagnostics
                    .push(Diagnostic::grammar(format!("duplicate template {}", ft.name), form.pos())),
                Ok(ft) => doc.types.push(ft),
                Err(d) => doc.declaration_diagnostics.push(d),
            },
            (Some("defrule"), Some(_)) => rule_forms.push(form),
            (Some(other), Some(_)) => doc
                .declaration_diagnostics
                .push(Diagnostic::grammar(format!("unsupported construct `{other}`"), form.pos())),
            _ => doc
                .structure_diagnostics
                .push(Diagnostic::grammar(format!("expected a top-level form, found `{form}`"), form.pos())),
        }
    }
    let combined: Option<Vec<FactType>> = match types {
        Some(ts) => Some(ts.iter().chain(doc.types.iter()).cloned().collect()),
        None if !doc.types.is_empty() => Some(doc.types.clone()),
        None => None,
    };
    for (index, form) in rule_forms.into_iter().enumerate() {
        let SExpr::List { children, close, span, pos } = form else { unreachable!() };
        let (name, result) = rule(children, *close, combined.as_deref(), *pos);
        doc.rules.push(RuleOutcome { name, index, position: *pos, source: text[span.0..span.1].to_owned(), result });
    }
    doc
}

pub fn parse_declarations(text: &str) -> (Vec<FactType>, Vec<Diagnostic>) {
    let doc = parse_document(text, None);
    let mut diags = doc.structure_diagnostics;
    diags.extend(doc.declaration_diagnostics);
    (doc.types, diags)
}

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
        Value::Bool(true) => "TRUE".into(),
        Value::Bool(false) => "FALSE".into(),
    }
}

fn term_text(t: &Term) -> String {
    match t {
        Term::Const(v) => literal(v),
        Term::Var(v) => format!("?{}", v.name),
    }
}

fn op_text(op: CmpOp) -> &'static str {
    match op {
        CmpOp::Eq => "eq",
        CmpOp::Ne => "neq",
        other => other.symbol(),
    }
}

pub fn print_rule(rule: &RuleIr) -> Result<String, Diagnostic> {
    if !is_rule_symbol(&rule.name) {
        return Err(Diagnostic::new(
            Code::EUnprintable,
            format!("rule name {:?} is not a clips-mini symbol", rule.name),
        ));
    }
    let mut out = format!("(defrule {}\n", rule.name);
    for p in &rule.patterns {
        out.push_str("  (");
        out.push_str(&p.type_name);
        let slots: std::collections::BTreeSet<&String> = p.slot_eq.keys().chain(p.slot_bind.keys()).collect();
        for slot in slots {
            let val = match p.slot_eq.get(slot) {
                Some(v) => literal(v),
                None => format!("?{}", p.slot_bind[slot].name),
            };
            write!(out, " ({slot} {val})").unwrap();
        }
        out.push_str(")\n");
    }
    for g in &rule.guards {
        writeln!(out, "  (test ({} ?{} {}))", op_text(g.op), g.lhs.name, term_text(&g.rhs)).unwrap();
    }
    out.push_str("  =>");
    for a in &rule.actions {
        out.push_str("\n  (assert (");
        out.push_str(&a.type_name);
        for (slot, t) in &a.values {
            write!(out, " ({slot} {})", term_text(t)).unwrap();
        }
        out.push_str("))");
    }
    out.push_str(")\n");
    Ok(out)
}

pub fn print_declarations(types: &[FactType]) -> String {
    let mut out = String::new();
    for t in types {
        write!(out, "(deftemplate {}", t.name).unwrap();
        for s in &t.slots {
            let kind = match s.kind {
                SlotKind::String => "STRING",
                SlotKind::Integer => "INTEGER",
                SlotKind::Boolean => "BOOLEAN",
            };
            write!(out, "\n  (slot {} (type {kind}))", s.name).unwrap();
        }
        out.push_str(")\n");
    }
    out
}
