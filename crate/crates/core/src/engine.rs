//! Forward-chaining production engine over the neutral rule form.
//!
//! Matching is a nested-loop join over the working memory in canonical fact
//! order. Rule instantiations are refracted per matched fact tuple, so
//! running twice without new facts fires nothing.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, Mutex, MutexGuard, RwLock};

use serde::{Deserialize, Serialize};

use crate::diag::{Code, Diagnostic};
use crate::dialect::DialectId;
use crate::ir::{self, Fact, FactType, RuleIr, Term, Value};

pub const DEFAULT_MAX_FIRINGS: u64 = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstalledRule {
    pub name: String,
    /// Submitted text, verbatim.
    pub source: String,
    pub ir: RuleIr,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Validity {
    Valid,
    Invalid,
}

/// Outcome of registering or validating one rule. `rule` is the rule name
/// when its header parsed; `index` is the position within the submitted
/// batch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub rule: Option<String>,
    pub index: usize,
    pub status: Validity,
    pub diagnostics: Vec<Diagnostic>,
}

impl Verdict {
    pub fn valid(rule: impl Into<String>, index: usize) -> Self {
        Verdict { rule: Some(rule.into()), index, status: Validity::Valid, diagnostics: vec![] }
    }

    pub fn invalid(rule: Option<String>, index: usize, diagnostics: Vec<Diagnostic>) -> Self {
        debug_assert!(!diagnostics.is_empty());
        Verdict { rule, index, status: Validity::Invalid, diagnostics }
    }

    pub fn is_valid(&self) -> bool {
        self.status == Validity::Valid
    }

    pub fn label(&self) -> String {
        self.rule.clone().unwrap_or_else(|| format!("#{}", self.index))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub firings: u64,
    /// Facts added by this run, in canonical order.
    pub new_facts: Vec<Fact>,
    pub iterations: u64,
    pub diverged: bool,
}

/// One way of satisfying a rule's condition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Binding {
    pub vars: BTreeMap<String, Value>,
    /// The fact matched by each pattern, in pattern order.
    pub facts: Vec<Fact>,
}

/// A named working memory with its fact types, facts, rules and refraction
/// state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeSet {
    name: String,
    dialect: DialectId,
    types: Vec<FactType>,
    facts: BTreeSet<Fact>,
    rules: Vec<InstalledRule>,
    refraction: BTreeSet<(String, Vec<Fact>)>,
}

impl KnowledgeSet {
    pub fn new(name: &str, declarations: &str, dialect: DialectId) -> Result<Self, Diagnostic> {
        if !ir::is_identifier(name) {
            return Err(Diagnostic::new(Code::EBadRequest, format!("knowledge set name {name:?} is not an identifier")));
        }
        let doc = dialect.parse_document(declarations, None);
        let first = doc.structure_diagnostics.first().or(doc.declaration_diagnostics.first());
        if let Some(d) = first {
            return Err(d.clone());
        }
        if let Some(r) = doc.rules.first() {
            return Err(Diagnostic::grammar("rules are not accepted in declarations", r.position));
        }
        Ok(KnowledgeSet {
            name: name.to_owned(),
            dialect,
            types: doc.types,
            facts: BTreeSet::new(),
            rules: Vec::new(),
            refraction: BTreeSet::new(),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dialect(&self) -> DialectId {
        self.dialect
    }

    pub fn types(&self) -> &[FactType] {
        &self.types
    }

    pub fn rules(&self) -> &[InstalledRule] {
        &self.rules
    }

    /// Facts in canonical order.
    pub fn facts(&self) -> impl Iterator<Item = &Fact> {
        self.facts.iter()
    }

    /// Serialized state; equal snapshots mean equal knowledge sets.
    pub fn snapshot(&self) -> String {
        serde_json::to_string(self).expect("knowledge set serializes")
    }

    fn conform(&self, fact: &Fact) -> Result<(), Diagnostic> {
        let ty = ir::find_type(&self.types, &fact.type_name)
            .ok_or_else(|| Diagnostic::new(Code::EUnknownType, format!("unknown fact type {}", fact.type_name)))?;
        ty.conforms(fact)
    }

    pub fn assert_fact(&mut self, fact: Fact) -> Result<bool, Diagnostic> {
        self.conform(&fact)?;
        Ok(self.facts.insert(fact))
    }

    pub fn retract_fact(&mut self, fact: &Fact) -> Result<bool, Diagnostic> {
        self.conform(fact)?;
        if !self.facts.remove(fact) {
            return Ok(false);
        }
        self.refraction.retain(|(_, tuple)| !tuple.contains(fact));
        Ok(true)
    }

    /// Trial registration: parse, check, install. Nothing is stored unless
    /// the verdict is valid.
    pub fn add_rule(&mut self, source: &str) -> Verdict {
        let doc = self.dialect.parse_document(source, Some(&self.types));
        let mut diags = doc.structure_diagnostics;
        diags.extend(doc.declaration_diagnostics);
        if !doc.types.is_empty() {
            diags.push(Diagnostic::new(Code::EGrammar, "declarations are not accepted in rule text"));
        }
        let mut rules = doc.rules.into_iter();
        let (first, extra) = (rules.next(), rules.next());
        let name = first.as_ref().and_then(|r| r.name.clone());
        match (first, extra) {
            (None, _) => diags.push(Diagnostic::new(Code::EGrammar, "no rule found")),
            (Some(_), Some(r)) => diags.push(Diagnostic::grammar("expected exactly one rule per entry", r.position)),
            (Some(r), None) => match r.result {
                Err(d) => diags.extend(d),
                Ok(ir) if diags.is_empty() => {
                    if self.rules.iter().any(|x| x.name == ir.name) {
                        let d = Diagnostic::new(Code::EDuplicateRule, format!("rule {:?} already exists", ir.name)).at(r.position);
                        return Verdict::invalid(name, 0, vec![d]);
                    }
                    self.rules.push(InstalledRule { name: ir.name.clone(), source: source.to_owned(), ir });
                    return Verdict::valid(name.unwrap_or_default(), 0);
                }
                Ok(_) => {}
            },
        }
        Verdict::invalid(name, 0, diags)
    }

    pub fn remove_rule(&mut self, name: &str) -> bool {
        let Some(at) = self.rules.iter().position(|r| r.name == name) else {
            return false;
        };
        self.rules.remove(at);
        self.refraction.retain(|(rule, _)| rule != name);
        true
    }

    /// Validates every rule block of `text` by registering it and removing
    /// it again. The knowledge set is left exactly as it was.
    pub fn validate(&mut self, text: &str) -> Vec<Verdict> {
        let doc = self.dialect.parse_document(text, Some(&self.types));
        let mut structural = doc.structure_diagnostics.clone();
        structural.extend(doc.declaration_diagnostics.iter().cloned());
        if !doc.types.is_empty() {
            structural.push(Diagnostic::new(Code::EGrammar, "declarations are not accepted in rule text"));
        }
        if doc.rules.is_empty() && structural.is_empty() {
            structural.push(Diagnostic::new(Code::EGrammar, "no rule found"));
        }
        let mut out = Vec::new();
        if !structural.is_empty() {
            out.push(Verdict::invalid(None, 0, structural));
        }
        for outcome in doc.rules {
            let index = out.len();
            let mut verdict = match &outcome.result {
                Err(d) => Verdict::invalid(outcome.name.clone(), index, d.clone()),
                Ok(_) => {
                    let v = self.add_rule(&outcome.source);
                    if let (true, Some(name)) = (v.is_valid(), &v.rule) {
                        self.remove_rule(name);
                    }
                    v
                }
            };
            verdict.index = index;
            out.push(verdict);
        }
        out
    }

    /// All bindings of `rule` against the working memory, in deterministic
    /// order: patterns joined left to right, facts in canonical order.
    pub fn match_rule(&self, rule: &RuleIr) -> Vec<Binding> {
        let mut out = Vec::new();
        let mut vars = BTreeMap::new();
        let mut facts = Vec::with_capacity(rule.patterns.len());
        self.join(rule, 0, &mut vars, &mut facts, &mut out);
        out
    }

    fn join<'a>(
        &'a self,
        rule: &RuleIr,
        depth: usize,
        vars: &mut BTreeMap<String, Value>,
        facts: &mut Vec<&'a Fact>,
        out: &mut Vec<Binding>,
    ) {
        let Some(pattern) = rule.patterns.get(depth) else {
            if guards_hold(rule, vars) {
                out.push(Binding { vars: vars.clone(), facts: facts.iter().map(|f| (*f).clone()).collect() });
            }
            return;
        };
        for fact in self.facts.iter().filter(|f| f.type_name == pattern.type_name) {
            if !pattern.slot_eq.iter().all(|(s, v)| fact.values.get(s) == Some(v)) {
                continue;
            }
            let mut introduced = Vec::new();
            let mut consistent = true;
            for (slot, var) in &pattern.slot_bind {
                let Some(value) = fact.values.get(slot) else {
                    consistent = false;
                    break;
                };
                match vars.get(&var.name) {
                    Some(existing) if existing != value => {
                        consistent = false;
                        break;
                    }
                    Some(_) => {}
                    None => {
                        vars.insert(var.name.clone(), value.clone());
                        introduced.push(var.name.clone());
                    }
                }
            }
            if consistent {
                facts.push(fact);
                self.join(rule, depth + 1, vars, facts, out);
                facts.pop();
            }
            for name in introduced {
                vars.remove(&name);
            }
        }
    }

    /// Fires rules to a fixpoint. Fails with `E_DIVERGED` if more than
    /// `max_firings` instantiations would fire; facts asserted up to that
    /// point stay in the working memory.
    pub fn run(&mut self, max_firings: u64) -> Result<RunReport, Diagnostic> {
        let mut report = RunReport::default();
        loop {
            report.iterations += 1;
            let mut fired = false;
            for i in 0..self.rules.len() {
                let (name, ir) = (self.rules[i].name.clone(), self.rules[i].ir.clone());
                for binding in self.match_rule(&ir) {
                    let key = (name.clone(), binding.facts);
                    if self.refraction.contains(&key) {
                        continue;
                    }
                    if report.firings >= max_firings {
                        return Err(Diagnostic::new(Code::EDiverged, format!("exceeded {max_firings} firings")));
                    }
                    self.refraction.insert(key);
                    report.firings += 1;
                    fired = true;
                    for action in &ir.actions {
                        let fact = instantiate(action, &binding.vars);
                        if self.facts.insert(fact.clone()) {
                            report.new_facts.push(fact);
                        }
                    }
                }
            }
            if !fired {
                break;
            }
        }
        report.new_facts.sort();
        Ok(report)
    }
}

fn resolve<'a>(t: &'a Term, vars: &'a BTreeMap<String, Value>) -> &'a Value {
    match t {
        Term::Const(v) => v,
        Term::Var(v) => &vars[&v.name],
    }
}

fn guards_hold(rule: &RuleIr, vars: &BTreeMap<String, Value>) -> bool {
    rule.guards.iter().all(|g| g.op.eval(&vars[&g.lhs.name], resolve(&g.rhs, vars)))
}

fn instantiate(action: &ir::AssertAction, vars: &BTreeMap<String, Value>) -> Fact {
    Fact {
        type_name: action.type_name.clone(),
        values: action.values.iter().map(|(s, t)| (s.clone(), resolve(t, vars).clone())).collect(),
    }
}

/// The knowledge sets of one engine instance. Each knowledge set is its own
/// lock, so different sets can be worked on concurrently.
#[derive(Debug)]
pub struct Engine {
    dialect: DialectId,
    sets: RwLock<BTreeMap<String, Arc<Mutex<KnowledgeSet>>>>,
}

pub type KsGuard<'a> = MutexGuard<'a, KnowledgeSet>;

impl Engine {
    pub fn new(dialect: DialectId) -> Self {
        Engine { dialect, sets: RwLock::new(BTreeMap::new()) }
    }

    pub fn dialect(&self) -> DialectId {
        self.dialect
    }

    pub fn create_knowledge_set(&self, name: &str, declarations: &str) -> Result<(), Diagnostic> {
        let mut sets = self.sets.write().unwrap_or_else(|e| e.into_inner());
        if sets.contains_key(name) {
            return Err(Diagnostic::new(Code::EExists, format!("knowledge set {name:?} already exists")));
        }
        let ks = KnowledgeSet::new(name, declarations, self.dialect)?;
        sets.insert(name.to_owned(), Arc::new(Mutex::new(ks)));
        Ok(())
    }

    pub fn delete_knowledge_set(&self, name: &str) -> Result<(), Diagnostic> {
        let mut sets = self.sets.write().unwrap_or_else(|e| e.into_inner());
        sets.remove(name)
            .map(|_| ())
            .ok_or_else(|| Diagnostic::new(Code::ENotFound, format!("no knowledge set {name:?}")))
    }

    /// Sorted knowledge set names.
    pub fn names(&self) -> Vec<String> {
        self.sets.read().unwrap_or_else(|e| e.into_inner()).keys().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.sets.read().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, name: &str) -> Option<Arc<Mutex<KnowledgeSet>>> {
        self.sets.read().unwrap_or_else(|e| e.into_inner()).get(name).cloned()
    }

    /// Runs `f` with exclusive access to the named knowledge set.
    pub fn with<T>(&self, name: &str, f: impl FnOnce(&mut KnowledgeSet) -> T) -> Result<T, Diagnostic> {
        let ks = self
            .get(name)
            .ok_or_else(|| Diagnostic::new(Code::ENotFound, format!("no knowledge set {name:?}")))?;
        let mut guard = ks.lock().unwrap_or_else(|e| e.into_inner());
        Ok(f(&mut guard))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DECLS: &str = "declare Person\n  name: string\n  age: integer\nend\ndeclare Adult\n  name: string\nend\n";
    const ADULT: &str = "rule \"adult\"\nwhen\n  Person(age >= 18, name : $n)\nthen\n  insert Adult(name: $n);\nend";

    fn person(name: &str, age: i64) -> Fact {
        Fact::new("Person", [("name", Value::from(name)), ("age", age.into())])
    }

    fn demo() -> KnowledgeSet {
        KnowledgeSet::new("demo", DECLS, DialectId::DrlMini).unwrap()
    }

    #[test]
    fn create() {
        let ks = demo();
        assert_eq!(ks.types().len(), 2);
        assert_eq!(ks.facts().count(), 0);
        assert!(ks.rules().is_empty());
        let e = KnowledgeSet::new("x", "declare P\n a: float\nend", DialectId::DrlMini).unwrap_err();
        assert_eq!(e.code, Code::EGrammar);

        let engine = Engine::new(DialectId::DrlMini);
        engine.create_knowledge_set("demo", DECLS).unwrap();
        assert_eq!(engine.create_knowledge_set("demo", DECLS).unwrap_err().code, Code::EExists);
    }

    #[test]
    fn set_semantics() {
        let mut ks = demo();
        assert!(ks.assert_fact(person("ann", 20)).unwrap());
        assert!(!ks.assert_fact(person("ann", 20)).unwrap());
        assert!(!ks.retract_fact(&person("bob", 1)).unwrap());
        let bad = Fact::new("Person", [("name", Value::from("ann")), ("age", "old".into())]);
        assert_eq!(ks.assert_fact(bad).unwrap_err().code, Code::EKindMismatch);
        let ghost = Fact::new("Ghost", [("x", 1)]);
        assert_eq!(ks.assert_fact(ghost).unwrap_err().code, Code::EUnknownType);
    }

    #[test]
    fn add_and_remove_rules() {
        let mut ks = demo();
        let v = ks.add_rule(ADULT);
        assert!(v.is_valid(), "{v:?}");
        assert_eq!(ks.rules()[0].source, ADULT);
        let dup = ks.add_rule(ADULT);
        assert_eq!(dup.diagnostics[0].code, Code::EDuplicateRule);

        let before = ks.snapshot();
        let v = ks.add_rule("rule \"g\" when Ghost(x : $x) then insert Adult(name: \"a\"); end");
        assert_eq!(v.status, Validity::Invalid);
        assert_eq!(v.diagnostics[0].code, Code::EUnknownType);
        assert_eq!(ks.snapshot(), before);

        assert!(!ks.remove_rule("nope"));
        assert!(ks.remove_rule("adult"));
    }

    #[test]
    fn adult_match_and_run() {
        let mut ks = demo();
        ks.assert_fact(person("ann", 20)).unwrap();
        ks.assert_fact(person("bob", 15)).unwrap();
        ks.add_rule(ADULT);
        let ir = ks.rules()[0].ir.clone();
        let m = ks.match_rule(&ir);
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].vars["v1"], Value::from("ann"));
        assert_eq!(m[0].vars["v0"], Value::Int(20));

        let r = ks.run(DEFAULT_MAX_FIRINGS).unwrap();
        assert_eq!(r.firings, 1);
        assert_eq!(r.new_facts, vec![Fact::new("Adult", [("name", "ann")])]);
        assert!(!r.diverged);
        let again = ks.run(DEFAULT_MAX_FIRINGS).unwrap();
        assert_eq!(again.firings, 0);
        assert!(again.new_facts.is_empty());
    }

    #[test]
    fn empty_memory_matches_nothing() {
        let mut ks = demo();
        ks.add_rule(ADULT);
        assert!(ks.match_rule(&ks.rules()[0].ir).is_empty());
    }

    #[test]
    fn repeated_pattern_cross_product() {
        let decls = "declare P\n x: integer\nend\ndeclare Q\n a: integer\n b: integer\nend";
        let mut ks = KnowledgeSet::new("k", decls, DialectId::DrlMini).unwrap();
        ks.assert_fact(Fact::new("P", [("x", 1)])).unwrap();
        ks.assert_fact(Fact::new("P", [("x", 2)])).unwrap();
        let v = ks.add_rule("rule \"pp\" when P(x : $a) P(x : $b) then insert Q(a: $a, b: $b); end");
        assert!(v.is_valid());
        let m = ks.match_rule(&ks.rules()[0].ir);
        assert_eq!(m.len(), 4);
        let pairs: Vec<(Value, Value)> = m.iter().map(|b| (b.vars["v0"].clone(), b.vars["v1"].clone())).collect();
        assert_eq!(pairs, vec![(1.into(), 1.into()), (1.into(), 2.into()), (2.into(), 1.into()), (2.into(), 2.into())]);
    }

    #[test]
    fn transitive_closure() {
        let decls = "declare Edge\n from: string\n to: string\nend\ndeclare Path\n from: string\n to: string\nend";
        let mut ks = KnowledgeSet::new("g", decls, DialectId::DrlMini).unwrap();
        for (a, b) in [("a", "b"), ("b", "c"), ("c", "d")] {
            ks.assert_fact(Fact::new("Edge", [("from", a), ("to", b)])).unwrap();
        }
        assert!(ks.add_rule("rule \"base\" when Edge(from : $a, to : $b) then insert Path(from: $a, to: $b); end").is_valid());
        assert!(ks
            .add_rule("rule \"step\" when Path(from : $a, to : $b) Edge(from : $b, to : $c) then insert Path(from: $a, to: $c); end")
            .is_valid());
        let r = ks.run(DEFAULT_MAX_FIRINGS).unwrap();
        assert_eq!(r.new_facts.len(), 6);
        assert!(r.new_facts.iter().all(|f| f.type_name == "Path"));
        assert_eq!(ks.run(DEFAULT_MAX_FIRINGS).unwrap().firings, 0);
    }

    #[test]
    fn retraction_clears_refraction() {
        let mut ks = demo();
        ks.assert_fact(person("ann", 20)).unwrap();
        ks.add_rule(ADULT);
        assert_eq!(ks.run(10).unwrap().firings, 1);
        ks.retract_fact(&person("ann", 20)).unwrap();
        ks.assert_fact(person("ann", 20)).unwrap();
        // Adult(ann) already exists, but the instantiation fires again
        let r = ks.run(10).unwrap();
        assert_eq!(r.firings, 1);
        assert!(r.new_facts.is_empty());
    }

    #[test]
    fn firing_cap() {
        let mut ks = demo();
        for i in 0..5 {
            ks.assert_fact(person(&format!("p{i}"), 30)).unwrap();
        }
        ks.add_rule(ADULT);
        assert_eq!(ks.run(3).unwrap_err().code, Code::EDiverged);
    }

    #[test]
    fn validate_leaves_state_alone() {
        let mut ks = demo();
        ks.assert_fact(person("ann", 20)).unwrap();
        let before = ks.snapshot();
        let v = ks.validate(ADULT);
        assert_eq!(v.len(), 1);
        assert!(v[0].is_valid());
        assert_eq!(ks.snapshot(), before);

        let v = ks.validate("rule \"g\" when Ghost(x : $x) then insert Adult(name: \"a\"); end");
        assert_eq!(v[0].diagnostics[0].code, Code::EUnknownType);
        let v = ks.validate("rule \"b\" when Person(age >=) then end");
        assert_eq!(v[0].diagnostics[0].code, Code::EGrammar);
        let v = ks.validate("nonsense");
        assert_eq!(v[0].diagnostics[0].code, Code::EGrammar);
        assert_eq!(ks.snapshot(), before);
    }

    #[test]
    fn validate_multiple_blocks() {
        let mut ks = demo();
        let text = format!("{ADULT}\nrule \"g\" when Ghost(x : $x) then insert Adult(name: \"a\"); end");
        let v = ks.validate(&text);
        assert_eq!(v.len(), 2);
        assert!(v[0].is_valid());
        assert_eq!((v[1].index, v[1].rule.as_deref()), (1, Some("g")));
    }

    #[test]
    fn rule_text_must_hold_one_rule() {
        let mut ks = demo();
        let v = ks.add_rule(&format!("{ADULT}\n{}", ADULT.replace("adult", "adult2")));
        assert_eq!(v.status, Validity::Invalid);
        assert!(ks.rules().is_empty());
        assert_eq!(ks.add_rule("").diagnostics[0].code, Code::EGrammar);
    }
}
