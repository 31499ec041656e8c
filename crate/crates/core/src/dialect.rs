//! Dialect identifiers and dispatch over the two front ends.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::diag::{Code, Diagnostic};
use crate::ir::{FactType, RuleIr};
use crate::lower::Document;
use crate::{clips, drl};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DialectId {
    #[serde(rename = "drl-mini")]
    DrlMini,
    #[serde(rename = "clips-mini")]
    ClipsMini,
}

impl DialectId {
    pub const ALL: [DialectId; 2] = [DialectId::DrlMini, DialectId::ClipsMini];

    pub fn as_str(self) -> &'static str {
        match self {
            DialectId::DrlMini => "drl-mini",
            DialectId::ClipsMini => "clips-mini",
        }
    }

    pub fn parse_document(self, text: &str, types: Option<&[FactType]>) -> Document {
        match self {
            DialectId::DrlMini => drl::parse_document(text, types),
            DialectId::ClipsMini => clips::parse_document(text, types),
        }
    }

    pub fn parse_declarations(self, text: &str) -> (Vec<FactType>, Vec<Diagnostic>) {
        match self {
            DialectId::DrlMini => drl::parse_declarations(text),
            DialectId::ClipsMini => clips::parse_declarations(text),
        }
    }

    pub fn parse_rules(self, text: &str, types: &[FactType]) -> (Vec<RuleIr>, Vec<Diagnostic>) {
        match self {
            DialectId::DrlMini => drl::parse_rules(text, types),
            DialectId::ClipsMini => clips::parse_rules(text, types),
        }
    }

    pub fn print_rule(self, rule: &RuleIr) -> Result<String, Diagnostic> {
        match self {
            DialectId::DrlMini => drl::print_rule(rule),
            DialectId::ClipsMini => clips::print_rule(rule),
        }
    }

    pub fn print_declarations(self, types: &[FactType]) -> String {
        match self {
            DialectId::DrlMini => drl::print_declarations(types),
            DialectId::ClipsMini => clips::print_declarations(types),
        }
    }

    /// Splits `text` into the verbatim source of each rule block.
    pub fn split_rules(self, text: &str) -> Result<Vec<String>, Diagnostic> {
        let doc = self.parse_document(text, None);
        if let Some(d) = doc.structure_diagnostics.into_iter().next() {
            return Err(d);
        }
        Ok(doc.rules.into_iter().map(|r| r.source).collect())
    }
}

impl fmt::Display for DialectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DialectId {
    type Err = Diagnostic;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DialectId::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| Diagnostic::new(Code::EBadRequest, format!("unknown dialect {s:?} (expected drl-mini or clips-mini)")))
    }
}
