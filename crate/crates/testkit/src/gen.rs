//! Seeded generators. Everything is driven by a caller-supplied RNG so a
//! failing case can be replayed from its seed.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::Rng;
use rulemesh_core::ir::{self, AssertAction, CmpOp, Fact, FactType, Guard, Pattern, RuleIr, SlotKind, Term, Value, Var};
use rulemesh_core::DialectId;

/// Words that are keywords in at least one dialect.
const RESERVED: &[&str] = &[
    "declare", "end", "rule", "when", "then", "insert", "true", "false", "test", "not", "slot", "type", "assert",
    "defrule", "deftemplate", "eq", "neq",
];

const STRINGS: &[&str] = &["ann", "bob", "a b", "q\"t", "back\\slash", ""];

fn ident(rng: &mut impl Rng, upper: bool) -> String {
    const HEAD_LOWER: &[u8] = b"abcdefghijklmnopqrstuvwxyz";
    const HEAD_UPPER: &[u8] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZ";
    const TAIL: &[u8] = b"abcdefghijklmnopqrstuvwxyz0123456789_";
    loop {
        let head = if upper { HEAD_UPPER } else { HEAD_LOWER };
        let mut s = String::new();
        s.push(*head.choose(rng).unwrap() as char);
        for _ in 0..rng.random_range(0..6) {
            s.push(*TAIL.choose(rng).unwrap() as char);
        }
        if !RESERVED.contains(&s.as_str()) && s != "TRUE" && s != "FALSE" {
            return s;
        }
    }
}

fn kind(rng: &mut impl Rng) -> SlotKind {
    // integers are weighted up so ordering guards show up often
    *[SlotKind::Integer, SlotKind::Integer, SlotKind::String, SlotKind::Boolean].choose(rng).unwrap()
}

/// A random constant of `kind` from a deliberately small domain.
pub fn value(rng: &mut impl Rng, kind: SlotKind) -> Value {
    match kind {
        SlotKind::Integer => Value::Int(rng.random_range(-3..=3)),
        SlotKind::String => Value::Str(STRINGS[..3].choose(rng).unwrap().to_string()),
        SlotKind::Boolean => Value::Bool(rng.random_bool(0.5)),
    }
}

/// Like [`value`] but also draws from escape-heavy strings and wide integers.
pub fn odd_value(rng: &mut impl Rng, kind: SlotKind) -> Value {
    match kind {
        SlotKind::Integer => Value::Int(*[i64::MIN, -1, 0, 7, i64::MAX].choose(rng).unwrap()),
        SlotKind::String => Value::Str(STRINGS.choose(rng).unwrap().to_string()),
        SlotKind::Boolean => Value::Bool(rng.random_bool(0.5)),
    }
}

/// 2 to 4 fact types with 1 to 3 slots each.
pub fn schema(rng: &mut impl Rng) -> Vec<FactType> {
    let mut types: Vec<FactType> = Vec::new();
    let n = rng.random_range(2..=4);
    while types.len() < n {
        let name = ident(rng, true);
        if types.iter().any(|t| t.name == name) {
            continue;
        }
        let mut slots: Vec<(String, SlotKind)> = Vec::new();
        let m = rng.random_range(1..=3);
        while slots.len() < m {
            let s = ident(rng, false);
            if !slots.iter().any(|(x, _)| *x == s) {
                slots.push((s, kind(rng)));
            }
        }
        let slots: Vec<(&str, SlotKind)> = slots.iter().map(|(s, k)| (s.as_str(), *k)).collect();
        types.push(FactType::new(name, &slots));
    }
    types
}

#[derive(Clone, Copy, Debug)]
pub struct RuleShape {
    pub max_patterns: usize,
    pub max_guards: usize,
    pub max_actions: usize,
    /// Draw constants from the wide, escape-heavy domain.
    pub odd_values: bool,
}

impl Default for RuleShape {
    fn default() -> Self {
        RuleShape { max_patterns: 3, max_guards: 3, max_actions: 2, odd_values: false }
    }
}

/// A random rule over `types`, already checked and canonical.
pub fn rule(rng: &mut impl Rng, types: &[FactType], name: &str, shape: RuleShape) -> RuleIr {
    let draw = |rng: &mut _, k| if shape.odd_values { odd_value(rng, k) } else { value(rng, k) };
    let mut vars: Vec<(Var, SlotKind)> = Vec::new();
    let mut patterns = Vec::new();
    for _ in 0..rng.random_range(1..=shape.max_patterns) {
        let t = types.choose(rng).unwrap();
        let mut p = Pattern::new(&t.name);
        for s in &t.slots {
            match rng.random_range(0..8) {
                0 | 1 => {}
                2 => {
                    p.slot_eq.insert(s.name.clone(), draw(rng, s.kind));
                }
                3 | 4 => {
                    let same: Vec<&Var> = vars.iter().filter(|(_, k)| *k == s.kind).map(|(v, _)| v).collect();
                    if let Some(v) = same.choose(rng) {
                        p.slot_bind.insert(s.name.clone(), (*v).clone());
                    }
                }
                _ => {
                    let v = Var::user(format!("x{}", vars.len()));
                    vars.push((v.clone(), s.kind));
                    p.slot_bind.insert(s.name.clone(), v);
                }
            }
        }
        patterns.push(p);
    }

    let mut guards = Vec::new();
    if !vars.is_empty() {
        for _ in 0..rng.random_range(0..=shape.max_guards) {
            let (lhs, k) = vars.choose(rng).unwrap().clone();
            let op = if k == SlotKind::Integer {
                *CmpOp::ALL.choose(rng).unwrap()
            } else {
                *[CmpOp::Eq, CmpOp::Ne].choose(rng).unwrap()
            };
            let same: Vec<&Var> = vars.iter().filter(|(_, vk)| *vk == k).map(|(v, _)| v).collect();
            let rhs = if rng.random_bool(0.3) {
                Term::Var((*same.choose(rng).unwrap()).clone())
            } else {
                Term::Const(draw(rng, k))
            };
            guards.push(Guard { lhs, op, rhs });
        }
    }

    let mut actions = Vec::new();
    for _ in 0..rng.random_range(1..=shape.max_actions) {
        let t = types.choose(rng).unwrap();
        let mut values = BTreeMap::new();
        for s in &t.slots {
            let same: Vec<&Var> = vars.iter().filter(|(_, k)| *k == s.kind).map(|(v, _)| v).collect();
            let term = match same.choose(rng) {
                Some(v) if rng.random_bool(0.7) => Term::Var((*v).clone()),
                _ => Term::Const(draw(rng, s.kind)),
            };
            values.insert(s.name.clone(), term);
        }
        actions.push(AssertAction { type_name: t.name.clone(), values });
    }

    let r = RuleIr { name: name.to_owned(), patterns, guards, actions };
    debug_assert!(ir::check(&r, types).is_empty(), "generator produced an invalid rule: {r:?}");
    ir::canonicalize(&r).expect("generated rule is checked")
}

/// A fact conforming to `t`.
pub fn fact(rng: &mut impl Rng, t: &FactType) -> Fact {
    Fact {
        type_name: t.name.clone(),
        values: t.slots.iter().map(|s| (s.name.clone(), value(rng, s.kind))).collect(),
    }
}

#[derive(Clone, Copy, Debug)]
pub struct InstanceConfig {
    pub max_rules: usize,
    pub max_facts: usize,
}

impl Default for InstanceConfig {
    fn default() -> Self {
        InstanceConfig { max_rules: 5, max_facts: 20 }
    }
}

/// A schema, a rule set and an initial working memory.
#[derive(Clone, Debug)]
pub struct Instance {
    pub types: Vec<FactType>,
    pub rules: Vec<RuleIr>,
    pub facts: Vec<Fact>,
}

impl Instance {
    pub fn generate(rng: &mut impl Rng, cfg: InstanceConfig) -> Self {
        let types = schema(rng);
        let rules = (0..rng.random_range(1..=cfg.max_rules))
            .map(|i| rule(rng, &types, &format!("r{i}"), RuleShape::default()))
            .collect();
        let facts = (0..rng.random_range(0..=cfg.max_facts))
            .map(|_| {
                let t = types.choose(rng).unwrap();
                fact(rng, t)
            })
            .collect();
        Instance { types, rules, facts }
    }

    pub fn declarations(&self, dialect: DialectId) -> String {
        dialect.print_declarations(&self.types)
    }

    /// Each rule printed in `dialect`, in order.
    pub fn rule_texts(&self, dialect: DialectId) -> Vec<String> {
        self.rules
            .iter()
            .map(|r| dialect.print_rule(r).expect("generated rules are printable"))
            .collect()
    }
}

/// A rule text over `types`, mutated with probability one half (dropped
/// character, unknown type, unbound variable, stray token). The flag reports
/// whether the text was left intact; a mutated text is usually but not
/// always invalid.
pub fn rule_text(rng: &mut impl Rng, types: &[FactType], dialect: DialectId, name: &str) -> (String, bool) {
    let r = rule(rng, types, name, RuleShape::default());
    let text = dialect.print_rule(&r).expect("printable");
    if rng.random_bool(0.5) {
        return (text, true);
    }
    let broken = match rng.random_range(0..4) {
        0 => {
            // drop one character from the middle
            let chars: Vec<char> = text.chars().collect();
            let i = rng.random_range(chars.len() / 3..chars.len() * 2 / 3);
            let mut s: String = chars[..i].iter().collect();
            s.extend(&chars[i + 1..]);
            s
        }
        1 => text.replacen(&r.patterns[0].type_name, "Ghost", 1),
        2 => {
            let mut r2 = r.clone();
            let a = &mut r2.actions[0];
            let k = a.values.keys().next().cloned().unwrap();
            a.values.insert(k, Term::Var(Var::user("zz")));
            dialect.print_rule(&r2).expect("printable")
        }
        _ => text.replacen(" ", " @", 1),
    };
    (broken, false)
}
