//! Neutral rule representation used as the interchange pivot between
//! dialects.
//!
//! A [`RuleIr`] is a conjunction of slot patterns, a list of guards over the
//! variables those patterns bind, and a list of assert actions. There are no
//! function symbols, so firing a rule can only produce constants that already
//! occur in the rule text or in matched facts.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::diag::{Code, Diagnostic, Site};

/// `[A-Za-z_][A-Za-z0-9_]*`
pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlotKind {
    String,
    Integer,
    Boolean,
}

impl fmt::Display for SlotKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SlotKind::String => "string",
            SlotKind::Integer => "integer",
            SlotKind::Boolean => "boolean",
        })
    }
}

/// A ground value. JSON form is the bare JSON string, number or boolean.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Str(String),
}

impl Value {
    pub fn kind(&self) -> SlotKind {
        match self {
            Value::Str(_) => SlotKind::String,
            Value::Int(_) => SlotKind::Integer,
            Value::Bool(_) => SlotKind::Boolean,
        }
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Str(s.to_owned())
    }
}

impl From<String> for Value {
    fn from(s: String) -> Self {
        Value::Str(s)
    }
}

impl From<i64> for Value {
    fn from(n: i64) -> Self {
        Value::Int(n)
    }
}

impl From<bool> for Value {
    fn from(b: bool) -> Self {
        Value::Bool(b)
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Str(s) => write!(f, "{s:?}"),
            Value::Int(n) => write!(f, "{n}"),
            Value::Bool(b) => write!(f, "{b}"),
        }
    }
}

/// A rule variable. `synthetic` marks variables that were introduced by
/// dialect lowering rather than written by the user; in canonical form it is
/// recomputed from the rule's structure (see [`canonicalize`]).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Var {
    #[serde(rename = "var")]
    pub name: String,
    #[serde(default)]
    pub synthetic: bool,
}

impl Var {
    pub fn user(name: impl Into<String>) -> Self {
        Var { name: name.into(), synthetic: false }
    }

    pub fn synthetic(name: impl Into<String>) -> Self {
        Var { name: name.into(), synthetic: true }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "TermRepr", into = "TermRepr")]
pub enum Term {
    Const(Value),
    Var(Var),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum TermRepr {
    Const {
        #[serde(rename = "const")]
        value: Value,
    },
    Var(Var),
}

impl From<TermRepr> for Term {
    fn from(r: TermRepr) -> Self {
        match r {
            TermRepr::Const { value } => Term::Const(value),
            TermRepr::Var(v) => Term::Var(v),
        }
    }
}

impl From<Term> for TermRepr {
    fn from(t: Term) -> Self {
        match t {
            Term::Const(value) => TermRepr::Const { value },
            Term::Var(v) => TermRepr::Var(v),
        }
    }
}

impl Term {
    /// Dialect-neutral rendering used for ordering guards.
    pub fn render(&self) -> String {
        match self {
            Term::Const(v) => v.to_string(),
            Term::Var(v) => format!("?{}", v.name),
        }
    }

    pub fn as_var(&self) -> Option<&Var> {
        match self {
            Term::Var(v) => Some(v),
            Term::Const(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SlotDecl {
    pub name: String,
    pub kind: SlotKind,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FactType {
    pub name: String,
    pub slots: Vec<SlotDecl>,
}

impl FactType {
    pub fn new(name: impl Into<String>, slots: &[(&str, SlotKind)]) -> Self {
        FactType {
            name: name.into(),
            slots: slots.iter().map(|(n, k)| SlotDecl { name: (*n).to_owned(), kind: *k }).collect(),
        }
    }

    pub fn slot_kind(&self, slot: &str) -> Option<SlotKind> {
        self.slots.iter().find(|s| s.name == slot).map(|s| s.kind)
    }

    /// Checks that `fact` has exactly the declared slots with matching kinds.
    pub fn conforms(&self, fact: &Fact) -> Result<(), Diagnostic> {
        for (slot, value) in &fact.values {
            match self.slot_kind(slot) {
                None => {
                    return Err(Diagnostic::new(
                        Code::EUnknownSlot,
                        format!("{} has no slot {slot}", self.name),
                    ))
                }
                Some(kind) if kind != value.kind() => {
                    return Err(Diagnostic::new(
                        Code::EKindMismatch,
                        format!("{}.{slot} expects {kind}, got {}", self.name, value.kind()),
                    ))
                }
                Some(_) => {}
            }
        }
        if let Some(missing) = self.slots.iter().find(|s| !fact.values.contains_key(&s.name)) {
            return Err(Diagnostic::new(
                Code::EKindMismatch,
                format!("{} fact is missing slot {}", self.name, missing.name),
            ));
        }
        Ok(())
    }
}

pub fn find_type<'a>(types: &'a [FactType], name: &str) -> Option<&'a FactType> {
    types.iter().find(|t| t.name == name)
}

/// A ground fact. Facts order by type name, then by slot values with slot
/// names sorted, which is the canonical working-memory order.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Fact {
    #[serde(rename = "type")]
    pub type_name: String,
    pub values: BTreeMap<String, Value>,
}

impl Fact {
    pub fn new<V: Into<Value>>(type_name: impl Into<String>, values: impl IntoIterator<Item = (&'static str, V)>) -> Self {
        Fact {
            type_name: type_name.into(),
            values: values.into_iter().map(|(k, v)| (k.to_owned(), v.into())).collect(),
        }
    }
}

impl fmt::Display for Fact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.type_name)?;
        for (i, (k, v)) in self.values.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{k}: {v}")?;
        }
        f.write_str(")")
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pattern {
    #[serde(rename = "type")]
    pub type_name: String,
    #[serde(default)]
    pub slot_eq: BTreeMap<String, Value>,
    #[serde(default)]
    pub slot_bind: BTreeMap<String, Var>,
}

impl Pattern {
    pub fn new(type_name: impl Into<String>) -> Self {
        Pattern { type_name: type_name.into(), ..Default::default() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CmpOp {
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
}

impl CmpOp {
    pub const ALL: [CmpOp; 6] = [CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge];

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    pub fn from_symbol(s: &str) -> Option<CmpOp> {
        CmpOp::ALL.into_iter().find(|op| op.symbol() == s)
    }

    pub fn is_ordering(self) -> bool {
        !matches!(self, CmpOp::Eq | CmpOp::Ne)
    }

    /// The operator obtained by swapping the operands.
    pub fn flipped(self) -> CmpOp {
        match self {
            CmpOp::Lt => CmpOp::Gt,
            CmpOp::Le => CmpOp::Ge,
            CmpOp::Gt => CmpOp::Lt,
            CmpOp::Ge => CmpOp::Le,
            op => op,
        }
    }

    /// Evaluates the comparison. Ordering between different kinds is false.
    pub fn eval(self, lhs: &Value, rhs: &Value) -> bool {
        match self {
            CmpOp::Eq => lhs == rhs,
            CmpOp::Ne => lhs != rhs,
            _ => match (lhs, rhs) {
                (Value::Int(a), Value::Int(b)) => match self {
                    CmpOp::Lt => a < b,
                    CmpOp::Le => a <= b,
                    CmpOp::Gt => a > b,
                    CmpOp::Ge => a >= b,
                    CmpOp::Eq | CmpOp::Ne => unreachable!(),
                },
                _ => false,
            },
        }
    }
}

impl fmt::Display for CmpOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Guard {
    pub lhs: Var,
    pub op: CmpOp,
    pub rhs: Term,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AssertAction {
    #[serde(rename = "type")]
    pub type_name: String,
    pub values: BTreeMap<String, Term>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RuleIr {
    pub name: String,
    pub patterns: Vec<Pattern>,
    #[serde(default)]
    pub guards: Vec<Guard>,
    pub actions: Vec<AssertAction>,
}

impl RuleIr {
    /// Names of all variables bound by some pattern.
    pub fn bound_vars(&self) -> BTreeSet<&str> {
        self.patterns
            .iter()
            .flat_map(|p| p.slot_bind.values().map(|v| v.name.as_str()))
            .collect()
    }
}

/// Validates `rule` against the declared `types`. Returns one diagnostic per
/// violated invariant; an empty list means the rule is well formed.
pub fn check(rule: &RuleIr, types: &[FactType]) -> Vec<Diagnostic> {
    Checker::new(rule, Some(types)).run()
}

/// The type-independent subset of [`check`]: shape, variable names and range
/// restriction.
pub fn check_structure(rule: &RuleIr) -> Vec<Diagnostic> {
    Checker::new(rule, None).run()
}

struct Checker<'a> {
    rule: &'a RuleIr,
    types: Option<&'a [FactType]>,
    diags: Vec<Diagnostic>,
    // None when the variable is bound only through patterns of unknown type.
    var_kinds: HashMap<&'a str, Option<SlotKind>>,
}

impl<'a> Checker<'a> {
    fn new(rule: &'a RuleIr, types: Option<&'a [FactType]>) -> Self {
        Checker { rule, types, diags: Vec::new(), var_kinds: HashMap::new() }
    }

    fn push(&mut self, code: Code, detail: String, site: Site) {
        self.diags.push(Diagnostic::new(code, detail).with_site(site));
    }

    fn lookup(&self, name: &str) -> Option<Option<&'a FactType>> {
        self.types.map(|ts| find_type(ts, name))
    }

    fn run(mut self) -> Vec<Diagnostic> {
        let rule = self.rule;
        if rule.patterns.is_empty() {
            self.diags.push(Diagnostic::new(
                Code::EEmptyCondition,
                format!("rule {:?} has no patterns", rule.name),
            ));
        }
        if rule.actions.is_empty() {
            self.diags.push(Diagnostic::new(
                Code::EIncompleteAction,
                format!("rule {:?} has no actions", rule.name),
            ));
        }
        for (i, p) in rule.patterns.iter().enumerate() {
            self.check_pattern(i, p);
        }
        for (i, g) in rule.guards.iter().enumerate() {
            self.check_guard(i, g);
        }
        for (i, a) in rule.actions.iter().enumerate() {
            self.check_action(i, a);
        }
        self.diags
    }

    fn check_var_name(&mut self, v: &Var, site: Site) {
        if !is_identifier(&v.name) {
            self.push(Code::EGrammar, format!("invalid variable name {:?}", v.name), site);
        }
    }

    fn check_pattern(&mut self, i: usize, p: &'a Pattern) {
        let ty = match self.lookup(&p.type_name) {
            Some(None) => {
                self.push(Code::EUnknownType, format!("unknown fact type {}", p.type_name), Site::Pattern(i));
                None
            }
            Some(Some(t)) => Some(t),
            None => None,
        };
        for slot in p.slot_eq.keys().filter(|s| p.slot_bind.contains_key(*s)) {
            self.push(
                Code::EGrammar,
                format!("slot {slot} is both matched and bound"),
                Site::PatternSlot(i, slot.clone()),
            );
        }
        for (slot, value) in &p.slot_eq {
            if let Some(t) = ty {
                match t.slot_kind(slot) {
                    None => self.push(
                        Code::EUnknownSlot,
                        format!("{} has no slot {slot}", t.name),
                        Site::PatternSlot(i, slot.clone()),
                    ),
                    Some(k) if k != value.kind() => self.push(
                        Code::EKindMismatch,
                        format!("{}.{slot} expects {k}, got {value}", t.name),
                        Site::PatternSlot(i, slot.clone()),
                    ),
                    Some(_) => {}
                }
            }
        }
        for (slot, var) in &p.slot_bind {
            self.check_var_name(var, Site::PatternSlot(i, slot.clone()));
            let kind = match ty {
                Some(t) => match t.slot_kind(slot) {
                    None => {
                        self.push(
                            Code::EUnknownSlot,
                            format!("{} has no slot {slot}", t.name),
                            Site::PatternSlot(i, slot.clone()),
                        );
                        None
                    }
                    k => k,
                },
                None => None,
            };
            match self.var_kinds.get(var.name.as_str()).copied() {
                Some(Some(prev)) => {
                    if let Some(k) = kind {
                        if k != prev {
                            self.push(
                                Code::EKindMismatch,
                                format!("variable {} bound to both {prev} and {k}", var.name),
                                Site::PatternSlot(i, slot.clone()),
                            );
                        }
                    }
                }
                Some(None) => {
                    if kind.is_some() {
                        self.var_kinds.insert(&var.name, kind);
                    }
                }
                None => {
                    self.var_kinds.insert(&var.name, kind);
                }
            }
        }
    }

    /// Kind of a term if known; `Err` if it is an unbound variable.
    fn term_kind(&self, t: &Term) -> Result<Option<SlotKind>, ()> {
        match t {
            Term::Const(v) => Ok(Some(v.kind())),
            Term::Var(v) => self.var_kinds.get(v.name.as_str()).copied().ok_or(()),
        }
    }

    fn check_guard(&mut self, i: usize, g: &Guard) {
        self.check_var_name(&g.lhs, Site::Guard(i));
        if let Term::Var(v) = &g.rhs {
            self.check_var_name(v, Site::Guard(i));
        }
        let lhs = self.term_kind(&Term::Var(g.lhs.clone()));
        let rhs = self.term_kind(&g.rhs);
        if lhs.is_err() {
            self.push(Code::EUnboundVar, format!("variable {} is not bound by any pattern", g.lhs.name), Site::Guard(i));
        }
        if rhs.is_err() {
            let name = g.rhs.as_var().map(|v| v.name.as_str()).unwrap_or_default();
            self.push(Code::EUnboundVar, format!("variable {name} is not bound by any pattern"), Site::Guard(i));
        }
        let (Ok(lk), Ok(rk)) = (lhs, rhs) else { return };
        if let (Some(lk), Some(rk)) = (lk, rk) {
            if lk != rk {
                self.push(
                    Code::EKindMismatch,
                    format!("guard compares {lk} with {rk}"),
                    Site::Guard(i),
                );
                return;
            }
        }
        if g.op.is_ordering() {
            let non_int = [lk, rk].into_iter().flatten().find(|k| *k != SlotKind::Integer);
            if let Some(k) = non_int {
                self.push(
                    Code::EKindMismatch,
                    format!("operator {} requires integer operands, got {k}", g.op),
                    Site::Guard(i),
                );
            }
        }
    }

    fn check_action(&mut self, i: usize, a: &AssertAction) {
        let ty = match self.lookup(&a.type_name) {
            Some(None) => {
                self.push(Code::EUnknownType, format!("unknown fact type {}", a.type_name), Site::Action(i));
                None
            }
            Some(t) => t,
            None => None,
        };
        for (slot, term) in &a.values {
            let site = || Site::ActionSlot(i, slot.clone());
            if let Term::Var(v) = term {
                self.check_var_name(v, site());
            }
            let declared = match ty {
                Some(t) => match t.slot_kind(slot) {
                    None => {
                        self.push(Code::EUnknownSlot, format!("{} has no slot {slot}", t.name), site());
                        continue;
                    }
                    k => k,
                },
                None => None,
            };
            match self.term_kind(term) {
                Err(()) => {
                    let name = term.as_var().map(|v| v.name.as_str()).unwrap_or_default();
                    self.push(Code::EUnboundVar, format!("variable {name} is not bound by any pattern"), site());
                }
                Ok(Some(k)) => {
                    if let Some(d) = declared {
                        if d != k {
                            self.push(
                                Code::EKindMismatch,
                                format!("{}.{slot} expects {d}, got {k}", a.type_name),
                                site(),
                            );
                        }
                    }
                }
                Ok(None) => {}
            }
        }
        if let Some(t) = ty {
            let missing: Vec<&str> = t
                .slots
                .iter()
                .filter(|s| !a.values.contains_key(&s.name))
                .map(|s| s.name.as_str())
                .collect();
            if !missing.is_empty() {
                self.push(
                    Code::EIncompleteAction,
                    format!("assert of {} is missing slot(s) {}", t.name, missing.join(", ")),
                    Site::Action(i),
                );
            }
        }
    }
}

/// Renames variables to `v0, v1, …` in first-binding order (patterns in
/// order, slots by name), recomputes the synthetic flag and sorts guards.
///
/// A variable is synthetic in canonical form iff it is bound exactly once,
/// never appears in an action or on the right of a guard, and is the left
/// side of at least one guard. Both dialects lower constraints of that
/// shape identically, which makes canonical equality decide
/// alpha-equivalence across dialects.
pub fn canonicalize(rule: &RuleIr) -> Result<RuleIr, Diagnostic> {
    if let Some(first) = check_structure(rule).into_iter().next() {
        return Err(Diagnostic::new(
            Code::EUnchecked,
            format!("rule {:?} is not well formed: {}", rule.name, first.detail),
        ));
    }

    let mut names: HashMap<&str, String> = HashMap::new();
    let mut bind_count: HashMap<&str, usize> = HashMap::new();
    for p in &rule.patterns {
        for v in p.slot_bind.values() {
            let next = names.len();
            names.entry(&v.name).or_insert_with(|| format!("v{next}"));
            *bind_count.entry(&v.name).or_default() += 1;
        }
    }
    let mut not_synthetic: BTreeSet<&str> = BTreeSet::new();
    let mut guarded: BTreeSet<&str> = BTreeSet::new();
    for g in &rule.guards {
        guarded.insert(&g.lhs.name);
        if let Term::Var(v) = &g.rhs {
            not_synthetic.insert(&v.name);
        }
    }
    for a in &rule.actions {
        for t in a.values.values() {
            if let Term::Var(v) = t {
                not_synthetic.insert(&v.name);
            }
        }
    }
    let rename = |v: &Var| -> Var {
        let n = v.name.as_str();
        Var {
            name: names[n].clone(),
            synthetic: bind_count[n] == 1 && guarded.contains(n) && !not_synthetic.contains(n),
        }
    };
    let rename_term = |t: &Term| match t {
        Term::Var(v) => Term::Var(rename(v)),
        c => c.clone(),
    };

    let patterns = rule
        .patterns
        .iter()
        .map(|p| Pattern {
            type_name: p.type_name.clone(),
            slot_eq: p.slot_eq.clone(),
            slot_bind: p.slot_bind.iter().map(|(s, v)| (s.clone(), rename(v))).collect(),
        })
        .collect();
    let mut guards: Vec<Guard> = rule
        .guards
        .iter()
        .map(|g| Guard { lhs: rename(&g.lhs), op: g.op, rhs: rename_term(&g.rhs) })
        .collect();
    guards.sort_by_cached_key(|g| (g.lhs.name.clone(), g.op, g.rhs.render()));
    let actions = rule
        .actions
        .iter()
        .map(|a| AssertAction {
            type_name: a.type_name.clone(),
            values: a.values.iter().map(|(s, t)| (s.clone(), rename_term(t))).collect(),
        })
        .collect();
    Ok(RuleIr { name: rule.name.clone(), patterns, guards, actions })
}

/// Alpha-equivalence via canonical-form equality. Rules that fail the
/// structural check are never equivalent to anything.
pub fn alpha_equivalent(a: &RuleIr, b: &RuleIr) -> bool {
    match (canonicalize(a), canonicalize(b)) {
        (Ok(x), Ok(y)) => x == y,
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn types() -> Vec<FactType> {
        vec![
            FactType::new("Person", &[("name", SlotKind::String), ("age", SlotKind::Integer)]),
            FactType::new("Adult", &[("name", SlotKind::String)]),
        ]
    }

    fn adult(age_var: &str, name_var: &str) -> RuleIr {
        let mut p = Pattern::new("Person");
        p.slot_bind.insert("age".into(), Var::synthetic(age_var));
        p.slot_bind.insert("name".into(), Var::user(name_var));
        RuleIr {
            name: "adult".into(),
            patterns: vec![p],
            guards: vec![Guard { lhs: Var::synthetic(age_var), op: CmpOp::Ge, rhs: Term::Const(18.into()) }],
            actions: vec![AssertAction {
                type_name: "Adult".into(),
                values: [("name".to_owned(), Term::Var(Var::user(name_var)))].into(),
            }],
        }
    }

    fn codes(d: &[Diagnostic]) -> Vec<Code> {
        d.iter().map(|d| d.code).collect()
    }

    #[test]
    fn adult_rule_checks_clean() {
        assert!(check(&adult("g", "n"), &types()).is_empty());
    }

    #[test]
    fn unbound_action_var() {
        let mut r = adult("g", "n");
        r.actions[0].values.insert("name".into(), Term::Var(Var::user("x")));
        let d = check(&r, &types());
        assert_eq!(codes(&d), vec![Code::EUnboundVar]);
        assert!(d[0].detail.contains('x'));
    }

    #[test]
    fn unknown_pattern_type() {
        let mut r = adult("g", "n");
        r.patterns[0].type_name = "Ghost".into();
        let d = check(&r, &types());
        assert_eq!(codes(&d), vec![Code::EUnknownType]);
        assert!(d[0].detail.contains("Ghost"));
    }

    #[test]
    fn kind_and_slot_errors() {
        let mut r = adult("g", "n");
        r.guards[0].rhs = Term::Const("old".into());
        assert_eq!(codes(&check(&r, &types())), vec![Code::EKindMismatch]);

        let mut r = adult("g", "n");
        r.patterns[0].slot_eq.insert("height".into(), 2.into());
        assert_eq!(codes(&check(&r, &types())), vec![Code::EUnknownSlot]);

        // ordering on strings
        let mut r = adult("g", "n");
        r.guards.push(Guard { lhs: Var::user("n"), op: CmpOp::Lt, rhs: Term::Const("z".into()) });
        assert_eq!(codes(&check(&r, &types())), vec![Code::EKindMismatch]);
    }

    #[test]
    fn incomplete_action_and_empty_rule() {
        let mut r = adult("g", "n");
        r.actions[0].values.clear();
        assert_eq!(codes(&check(&r, &types())), vec![Code::EIncompleteAction]);

        let r = RuleIr { name: "e".into(), patterns: vec![], guards: vec![], actions: vec![] };
        assert_eq!(codes(&check(&r, &types())), vec![Code::EEmptyCondition, Code::EIncompleteAction]);
    }

    #[test]
    fn unknown_type_does_not_cascade_into_unbound() {
        let mut r = adult("g", "n");
        r.patterns[0].type_name = "Ghost".into();
        r.actions[0].type_name = "Phantom".into();
        assert_eq!(codes(&check(&r, &types())), vec![Code::EUnknownType, Code::EUnknownType]);
    }

    #[test]
    fn canonical_names_follow_slot_order() {
        let c = canonicalize(&adult("zz", "aa")).unwrap();
        // age < name lexicographically
        assert_eq!(c.patterns[0].slot_bind["age"], Var::synthetic("v0"));
        assert_eq!(c.patterns[0].slot_bind["name"], Var::user("v1"));
        assert_eq!(canonicalize(&c).unwrap(), c);
    }

    #[test]
    fn synthetic_flag_is_structural() {
        // written by a user, but shaped like a lowered inline constraint
        let mut r = adult("g", "n");
        r.patterns[0].slot_bind.insert("age".into(), Var::user("g"));
        r.guards[0].lhs = Var::user("g");
        assert_eq!(canonicalize(&r).unwrap(), canonicalize(&adult("q", "m")).unwrap());
        assert!(alpha_equivalent(&r, &adult("x", "y")));
    }

    #[test]
    fn canonicalize_rejects_unbound() {
        let mut r = adult("g", "n");
        r.guards[0].lhs = Var::user("nope");
        assert_eq!(canonicalize(&r).unwrap_err().code, Code::EUnchecked);
    }

    #[test]
    fn guard_sorting() {
        let mut r = adult("g", "n");
        r.guards.insert(0, Guard { lhs: Var::user("g"), op: CmpOp::Lt, rhs: Term::Const(65.into()) });
        let c = canonicalize(&r).unwrap();
        let ops: Vec<_> = c.guards.iter().map(|g| g.op).collect();
        assert_eq!(ops, vec![CmpOp::Lt, CmpOp::Ge]);
    }

    #[test]
    fn json_rendering() {
        let c = canonicalize(&adult("g", "n")).unwrap();
        let v = serde_json::to_value(&c).unwrap();
        let keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        assert_eq!(keys, vec!["actions", "guards", "name", "patterns"]);
        assert_eq!(v["guards"][0]["rhs"], serde_json::json!({"const": 18}));
        assert_eq!(v["guards"][0]["lhs"], serde_json::json!({"var": "v0", "synthetic": true}));
        let back: RuleIr = serde_json::from_value(v).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn fact_conformance() {
        let t = &types()[0];
        assert!(t.conforms(&Fact::new("Person", [("name", Value::from("ann")), ("age", 20.into())])).is_ok());
        let bad = Fact::new("Person", [("name", Value::from("ann")), ("age", "old".into())]);
        assert_eq!(t.conforms(&bad).unwrap_err().code, Code::EKindMismatch);
        let missing = Fact::new("Person", [("name", "ann")]);
        assert_eq!(t.conforms(&missing).unwrap_err().code, Code::EKindMismatch);
    }

    #[test]
    fn cmp_eval() {
        assert!(CmpOp::Ge.eval(&18.into(), &18.into()));
        assert!(!CmpOp::Lt.eval(&"a".into(), &"b".into()));
        assert!(CmpOp::Ne.eval(&1.into(), &true.into()));
        for op in CmpOp::ALL {
            assert_eq!(CmpOp::from_symbol(op.symbol()), Some(op));
            assert_eq!(op.flipped().flipped(), op);
        }
    }
}
