//! Dialect-to-dialect translation through the neutral rule form.

use serde::{Deserialize, Serialize};

use crate::diag::{Code, Diagnostic};
use crate::dialect::DialectId;
use crate::ir::FactType;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Error,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuleReport {
    pub rule_name: String,
    pub status: Status,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranslationReport {
    /// Translated declarations followed by the rules whose status is ok, in
    /// input order.
    pub output_text: String,
    pub per_rule: Vec<RuleReport>,
    /// Problems in declaration blocks; they do not stop rule translation.
    #[serde(default)]
    pub diagnostics: Vec<Diagnostic>,
}

/// Parses `text` in `from`, canonicalizes, and prints in `to`. Failing rules
/// are reported individually. Only a document that cannot be split into
/// blocks is an error.
///
/// Rules are checked against `types` plus the document's declarations. When
/// both are empty only the type-independent checks apply.
pub fn translate(text: &str, from: DialectId, to: DialectId, types: &[FactType]) -> Result<TranslationReport, Diagnostic> {
    let doc = from.parse_document(text, (!types.is_empty()).then_some(types));
    if let Some(d) = doc.structure_diagnostics.into_iter().next() {
        return Err(d);
    }
    let mut output_text = to.print_declarations(&doc.types);
    let mut per_rule = Vec::with_capacity(doc.rules.len());
    for outcome in &doc.rules {
        let rule_name = outcome.label();
        let printed = match &outcome.result {
            Ok(ir) => to.print_rule(ir).map_err(|d| vec![d]),
            Err(d) => Err(d.clone()),
        };
        match printed {
            Ok(text) => {
                if !output_text.is_empty() {
                    output_text.push('\n');
                }
                output_text.push_str(&text);
                per_rule.push(RuleReport { rule_name, status: Status::Ok, diagnostics: vec![] });
            }
            Err(diagnostics) => per_rule.push(RuleReport { rule_name, status: Status::Error, diagnostics }),
        }
    }
    Ok(TranslationReport { output_text, per_rule, diagnostics: doc.declaration_diagnostics })
}

/// Translates a text holding exactly one rule block.
pub fn translate_rule(text: &str, from: DialectId, to: DialectId) -> Result<String, Vec<Diagnostic>> {
    let report = translate(text, from, to, &[]).map_err(|d| vec![d])?;
    match report.per_rule.as_slice() {
        [r] if r.status == Status::Ok => Ok(report.output_text),
        [r] => Err(r.diagnostics.clone()),
        rs => Err(vec![Diagnostic::new(Code::EGrammar, format!("expected exactly one rule, found {}", rs.len()))]),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Feature {
    Patterns,
    Guards,
    Assert,
    ParseNot,
}

/// Features the neutral form itself supports.
pub const IR_FEATURES: [Feature; 3] = [Feature::Patterns, Feature::Guards, Feature::Assert];

pub fn capabilities(dialect: DialectId) -> &'static [Feature] {
    match dialect {
        DialectId::DrlMini => &[Feature::Patterns, Feature::Guards, Feature::Assert],
        DialectId::ClipsMini => &[Feature::Patterns, Feature::Guards, Feature::Assert, Feature::ParseNot],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir;

    const DRL: &str = "declare Person\n  name: string\n  age: integer\nend\ndeclare Adult\n  name: string\nend\n\
        rule \"adult\"\nwhen\n  Person(age >= 18, name : $n)\nthen\n  insert Adult(name: $n);\nend\n";

    #[test]
    fn drl_to_clips() {
        let r = translate(DRL, DialectId::DrlMini, DialectId::ClipsMini, &[]).unwrap();
        assert_eq!(r.per_rule.len(), 1);
        assert_eq!(r.per_rule[0].status, Status::Ok);
        assert!(r.output_text.contains("(deftemplate Person"));
        assert!(r.output_text.contains("(defrule adult\n  (Person (age ?v0) (name ?v1))\n  (test (>= ?v0 18))"));
        let back = translate(&r.output_text, DialectId::ClipsMini, DialectId::DrlMini, &[]).unwrap();
        let a = DialectId::DrlMini.parse_document(DRL, None);
        let b = DialectId::DrlMini.parse_document(&back.output_text, None);
        assert_eq!(a.types, b.types);
        assert!(ir::alpha_equivalent(a.ok_rules().next().unwrap(), b.ok_rules().next().unwrap()));
    }

    #[test]
    fn not_rule_is_isolated() {
        let text = "(defrule a (P (x ?x)) => (assert (Q (y ?x))))\n\
                    (defrule b (not (P (x 1))) => (assert (Q (y 2))))\n\
                    (defrule c (P (x 2)) => (assert (Q (y 3))))";
        let r = translate(text, DialectId::ClipsMini, DialectId::DrlMini, &[]).unwrap();
        let statuses: Vec<_> = r.per_rule.iter().map(|p| p.status).collect();
        assert_eq!(statuses, vec![Status::Ok, Status::Error, Status::Ok]);
        assert_eq!(r.per_rule[1].diagnostics[0].code, Code::EUnsupported);
        assert!(r.per_rule[1].diagnostics[0].detail.contains("not"));
        assert!(r.output_text.contains("rule \"a\"") && r.output_text.contains("rule \"c\""));
        assert!(!r.output_text.contains("rule \"b\""));
    }

    #[test]
    fn same_dialect_formats() {
        let messy = "rule \"adult\" when Person( age>=18,name:$n ) then insert Adult(name:$n); end";
        let r = translate(messy, DialectId::DrlMini, DialectId::DrlMini, &[]).unwrap();
        assert_eq!(r.output_text, "rule \"adult\"\nwhen\n  Person(age >= 18, name : $v1)\nthen\n  insert Adult(name: $v1);\nend\n");
    }

    #[test]
    fn unsplittable_document() {
        let e = translate("(defrule a", DialectId::ClipsMini, DialectId::DrlMini, &[]).unwrap_err();
        assert_eq!(e.code, Code::EGrammar);
    }

    #[test]
    fn unprintable_name_is_per_rule() {
        let text = "rule \"two words\" when P(x : $x) then insert Q(y: $x); end";
        let r = translate(text, DialectId::DrlMini, DialectId::ClipsMini, &[]).unwrap();
        assert_eq!(r.per_rule[0].diagnostics[0].code, Code::EUnprintable);
    }

    #[test]
    fn capability_table() {
        assert!(!capabilities(DialectId::DrlMini).contains(&Feature::ParseNot));
        assert!(capabilities(DialectId::ClipsMini).contains(&Feature::ParseNot));
        let common: Vec<Feature> = capabilities(DialectId::DrlMini)
            .iter()
            .filter(|f| capabilities(DialectId::ClipsMini).contains(f))
            .copied()
            .collect();
        assert_eq!(common, IR_FEATURES);
    }

    #[test]
    fn translate_single_rule() {
        let out = translate_rule("(defrule a (P (x ?x)) => (assert (Q (y ?x))))", DialectId::ClipsMini, DialectId::DrlMini).unwrap();
        assert_eq!(out, "rule \"a\"\nwhen\n  P(x : $v0)\nthen\n  insert Q(y: $v0);\nend\n");
        let err = translate_rule("(defrule b (not (P (x 1))) => (assert (Q (y 2))))", DialectId::ClipsMini, DialectId::DrlMini).unwrap_err();
        assert_eq!(err[0].code, Code::EUnsupported);
    }
}
