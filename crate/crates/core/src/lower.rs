//! Lowering helpers shared by the dialect front ends.
//!
//! Both dialects describe a pattern as a list of per-slot constraints. The
//! builder folds those into the IR shape: equality to a constant goes to
//! `slot_eq`, a variable goes to `slot_bind`, anything else becomes a guard on
//! the slot's variable (introducing a synthetic one when the slot has none).

use std::collections::{BTreeMap, HashMap, HashSet};

use crate::diag::{Diagnostic, Position, Site};
use crate::ir::{self, AssertAction, CmpOp, FactType, Guard, Pattern, RuleIr, Term, Var};

/// The result of lowering one rule block of a document.
#[derive(Clone, Debug, PartialEq)]
pub struct RuleOutcome {
    /// Rule name when the header parsed.
    pub name: Option<String>,
    /// Zero-based index of the block among the document's rule blocks.
    pub index: usize,
    pub position: Position,
    /// The block's text, verbatim.
    pub source: String,
    pub result: Result<RuleIr, Vec<Diagnostic>>,
}

impl RuleOutcome {
    /// Rule name, or `#index` when the header did not parse.
    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| format!("#{}", self.index))
    }
}

/// A parsed document: declarations plus per-block rule outcomes.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Document {
    pub types: Vec<FactType>,
    pub declaration_diagnostics: Vec<Diagnostic>,
    pub rules: Vec<RuleOutcome>,
    /// Problems outside any block. Non-empty means the text could not be
    /// split into blocks cleanly.
    pub structure_diagnostics: Vec<Diagnostic>,
}

impl Document {
    pub fn ok_rules(&self) -> impl Iterator<Item = &RuleIr> {
        self.rules.iter().filter_map(|r| r.result.as_ref().ok())
    }

    pub fn all_diagnostics(&self) -> Vec<Diagnostic> {
        let mut out = self.structure_diagnostics.clone();
        out.extend(self.declaration_diagnostics.iter().cloned());
        for r in &self.rules {
            if let Err(d) = &r.result {
                out.extend(d.iter().cloned());
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug)]
enum SlotState {
    Eq,
    Bound,
}

pub(crate) struct RuleBuilder {
    name: String,
    patterns: Vec<Pattern>,
    guards: Vec<Guard>,
    actions: Vec<AssertAction>,
    reserved: HashSet<String>,
    fresh: usize,
    slot_state: HashMap<String, SlotState>,
    pattern_pos: Vec<Position>,
    pattern_slot_pos: HashMap<(usize, String), Position>,
    guard_pos: Vec<Position>,
    action_pos: Vec<Position>,
    action_slot_pos: HashMap<(usize, String), Position>,
    diags: Vec<Diagnostic>,
}

impl RuleBuilder {
    /// `user_vars` are all variable names written in the rule; synthetic
    /// names avoid them.
    pub fn new(name: String, user_vars: HashSet<String>) -> Self {
        RuleBuilder {
            name,
            patterns: Vec::new(),
            guards: Vec::new(),
            actions: Vec::new(),
            reserved: user_vars,
            fresh: 0,
            slot_state: HashMap::new(),
            pattern_pos: Vec::new(),
            pattern_slot_pos: HashMap::new(),
            guard_pos: Vec::new(),
            action_pos: Vec::new(),
            action_slot_pos: HashMap::new(),
            diags: Vec::new(),
        }
    }

    fn fresh_var(&mut self) -> Var {
        loop {
            let name = format!("_{}", self.fresh);
            self.fresh += 1;
            if !self.reserved.contains(&name) {
                return Var::synthetic(name);
            }
        }
    }

    pub fn begin_pattern(&mut self, type_name: &str, pos: Position) {
        self.patterns.push(Pattern::new(type_name));
        self.pattern_pos.push(pos);
        self.slot_state.clear();
    }

    fn push_guard(&mut self, guard: Guard, pos: Position) {
        self.guards.push(guard);
        self.guard_pos.push(pos);
    }

    /// Adds `slot OP rhs` to the current pattern. `slot : $v` is `Eq` with a
    /// variable.
    pub fn constrain(&mut self, slot: &str, op: CmpOp, rhs: Term, pos: Position) {
        let pi = self.patterns.len() - 1;
        self.pattern_slot_pos.entry((pi, slot.to_owned())).or_insert(pos);
        match self.slot_state.get(slot).copied() {
            None => match (op, rhs) {
                (CmpOp::Eq, Term::Var(v)) => {
                    self.patterns[pi].slot_bind.insert(slot.to_owned(), v);
                    self.slot_state.insert(slot.to_owned(), SlotState::Bound);
                }
                (CmpOp::Eq, Term::Const(c)) => {
                    self.patterns[pi].slot_eq.insert(slot.to_owned(), c);
                    self.slot_state.insert(slot.to_owned(), SlotState::Eq);
                }
                (op, rhs) => {
                    let s = self.fresh_var();
                    self.patterns[pi].slot_bind.insert(slot.to_owned(), s.clone());
                    self.slot_state.insert(slot.to_owned(), SlotState::Bound);
                    self.push_guard(Guard { lhs: s, op, rhs }, pos);
                }
            },
            Some(SlotState::Eq) => {
                // A second constraint on a constant slot: move the constant
                // into a guard over a fresh variable.
                let c = self.patterns[pi].slot_eq.remove(slot).expect("eq slot");
                let s = self.fresh_var();
                self.patterns[pi].slot_bind.insert(slot.to_owned(), s.clone());
                self.slot_state.insert(slot.to_owned(), SlotState::Bound);
                let first = self.pattern_slot_pos[&(pi, slot.to_owned())];
                self.push_guard(Guard { lhs: s, op: CmpOp::Eq, rhs: Term::Const(c) }, first);
                self.constrain(slot, op, rhs, pos);
            }
            Some(SlotState::Bound) => {
                let current = self.patterns[pi].slot_bind[slot].clone();
                match (op, rhs) {
                    (CmpOp::Eq, Term::Var(v)) if current.synthetic => self.substitute(&current, &v),
                    (op, rhs) => self.push_guard(Guard { lhs: current, op, rhs }, pos),
                }
            }
        }
    }

    fn substitute(&mut self, from: &Var, to: &Var) {
        for p in &mut self.patterns {
            for v in p.slot_bind.values_mut() {
                if v == from {
                    *v = to.clone();
                }
            }
        }
        for g in &mut self.guards {
            if &g.lhs == from {
                g.lhs = to.clone();
            }
        }
    }

    /// Adds a standalone guard (CLIPS `test`).
    pub fn guard(&mut self, guard: Guard, pos: Position) {
        self.push_guard(guard, pos);
    }

    pub fn begin_action(&mut self, type_name: &str, pos: Position) {
        self.actions.push(AssertAction { type_name: type_name.to_owned(), values: BTreeMap::new() });
        self.action_pos.push(pos);
    }

    pub fn action_slot(&mut self, slot: &str, value: Term, pos: Position) {
        let ai = self.actions.len() - 1;
        if self.actions[ai].values.contains_key(slot) {
            self.diags.push(Diagnostic::grammar(format!("slot {slot} assigned twice"), pos));
            return;
        }
        self.actions[ai].values.insert(slot.to_owned(), value);
        self.action_slot_pos.insert((ai, slot.to_owned()), pos);
    }

    fn locate(&self, site: &Site) -> Option<Position> {
        match site {
            Site::Pattern(i) => self.pattern_pos.get(*i).copied(),
            Site::PatternSlot(i, s) => self
                .pattern_slot_pos
                .get(&(*i, s.clone()))
                .or_else(|| self.pattern_pos.get(*i))
                .copied(),
            Site::Guard(i) => self.guard_pos.get(*i).copied(),
            Site::Action(i) => self.action_pos.get(*i).copied(),
            Site::ActionSlot(i, s) => self
                .action_slot_pos
                .get(&(*i, s.clone()))
                .or_else(|| self.action_pos.get(*i))
                .copied(),
        }
    }

    /// Runs the IR check (structural only when `types` is `None`) and
    /// canonicalizes. Check diagnostics are positioned at the constraint
    /// or action they concern, falling back to `rule_pos`.
    pub fn finish(self, types: Option<&[FactType]>, rule_pos: Position) -> Result<RuleIr, Vec<Diagnostic>> {
        let rule = RuleIr { name: self.name.clone(), patterns: self.patterns.clone(), guards: self.guards.clone(), actions: self.actions.clone() };
        let mut diags = self.diags.clone();
        let checked = match types {
            Some(t) => ir::check(&rule, t),
            None => ir::check_structure(&rule),
        };
        for mut d in checked {
            if d.position.is_none() {
                d.position = Some(d.site.as_ref().and_then(|s| self.locate(s)).unwrap_or(rule_pos));
            }
            diags.push(d);
        }
        if !diags.is_empty() {
            return Err(diags);
        }
        ir::canonicalize(&rule).map_err(|d| vec![d.at(rule_pos)])
    }
}

/// Escapes a string literal body; both dialects share the same escape rules.
pub(crate) fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Character cursor with 1-based line/column tracking.
pub(crate) struct Cursor<'a> {
    src: &'a str,
    pub offset: usize,
    pub line: u32,
    pub column: u32,
}

impl<'a> Cursor<'a> {
    pub fn new(src: &'a str) -> Self {
        Cursor { src, offset: 0, line: 1, column: 1 }
    }

    pub fn position(&self) -> Position {
        Position::new(self.line, self.column)
    }

    pub fn peek(&self) -> Option<char> {
        self.src[self.offset..].chars().next()
    }

    pub fn peek2(&self) -> Option<char> {
        let mut it = self.src[self.offset..].chars();
        it.next();
        it.next()
    }

    pub fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.offset += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    pub fn eat_while(&mut self, f: impl Fn(char) -> bool) -> &'a str {
        let start = self.offset;
        while let Some(c) = self.peek() {
            if !f(c) {
                break;
            }
            self.bump();
        }
        &self.src[start..self.offset]
    }

    /// Reads a string literal body after the opening quote. Returns `None`
    /// when the input ends before the closing quote.
    pub fn string_body(&mut self) -> Option<String> {
        let mut out = String::new();
        loop {
            match self.bump()? {
                '"' => return Some(out),
                '\\' => match self.bump()? {
                    'n' => out.push('\n'),
                    't' => out.push('\t'),
                    c => out.push(c),
                },
                c => out.push(c),
            }
        }
    }
}
