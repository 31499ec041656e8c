//! Brute-force fixpoint: test every rule against every tuple of facts until
//! nothing new appears.

use std::collections::{BTreeMap, BTreeSet};

use rulemesh_core::ir::{CmpOp, Fact, RuleIr, Term, Value};

fn compare(op: CmpOp, a: &Value, b: &Value) -> bool {
    use std::cmp::Ordering::*;
    let ord = match (a, b) {
        (Value::Int(x), Value::Int(y)) => Some(x.cmp(y)),
        _ => None,
    };
    match (op, ord) {
        (CmpOp::Eq, _) => a == b,
        (CmpOp::Ne, _) => a != b,
        (_, None) => false,
        (CmpOp::Lt, Some(o)) => o == Less,
        (CmpOp::Le, Some(o)) => o != Greater,
        (CmpOp::Gt, Some(o)) => o == Greater,
        (CmpOp::Ge, Some(o)) => o != Less,
    }
}

/// Variable assignment for a full tuple, or `None` if the tuple does not
/// satisfy the rule's condition.
fn satisfies(rule: &RuleIr, tuple: &[&Fact]) -> Option<BTreeMap<String, Value>> {
    let mut env: BTreeMap<String, Value> = BTreeMap::new();
    for (pattern, fact) in rule.patterns.iter().zip(tuple) {
        if pattern.type_name != fact.type_name {
            return None;
        }
        for (slot, want) in &pattern.slot_eq {
            if fact.values.get(slot) != Some(want) {
                return None;
            }
        }
        for (slot, var) in &pattern.slot_bind {
            let got = fact.values.get(slot)?;
            if let Some(prev) = env.insert(var.name.clone(), got.clone()) {
                if &prev != got {
                    return None;
                }
            }
        }
    }
    let value = |t: &Term| match t {
        Term::Const(v) => v.clone(),
        Term::Var(v) => env[&v.name].clone(),
    };
    for g in &rule.guards {
        if !compare(g.op, &env[&g.lhs.name], &value(&g.rhs)) {
            return None;
        }
    }
    Some(env)
}

/// Least fixpoint of `rules` over `facts`.
pub fn closure(rules: &[RuleIr], facts: &[Fact]) -> BTreeSet<Fact> {
    let mut known: BTreeSet<Fact> = facts.iter().cloned().collect();
    loop {
        let snapshot: Vec<Fact> = known.iter().cloned().collect();
        let mut added = Vec::new();
        for rule in rules {
            // candidate facts per pattern position (type filter only)
            let columns: Vec<Vec<&Fact>> = rule
                .patterns
                .iter()
                .map(|p| snapshot.iter().filter(|f| f.type_name == p.type_name).collect())
                .collect();
            if columns.iter().any(Vec::is_empty) {
                continue;
            }
            let mut idx = vec![0usize; columns.len()];
            'tuples: loop {
                let tuple: Vec<&Fact> = idx.iter().zip(&columns).map(|(i, c)| c[*i]).collect();
                if let Some(env) = satisfies(rule, &tuple) {
                    for a in &rule.actions {
                        let values = a
                            .values
                            .iter()
                            .map(|(s, t)| {
                                let v = match t {
                                    Term::Const(v) => v.clone(),
                                    Term::Var(v) => env[&v.name].clone(),
                                };
                                (s.clone(), v)
                            })
                            .collect();
                        added.push(Fact { type_name: a.type_name.clone(), values });
                    }
                }
                for k in (0..idx.len()).rev() {
                    idx[k] += 1;
                    if idx[k] < columns[k].len() {
                        continue 'tuples;
                    }
                    idx[k] = 0;
                }
                break;
            }
        }
        let before = known.len();
        known.extend(added);
        if known.len() == before {
            return known;
        }
    }
}
