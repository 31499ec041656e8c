//! Rule dialects, the neutral rule form they translate through, and a small
//! forward-chaining engine.
//!
//! * [`ir`]: the neutral rule representation, its checks and canonical form.
//! * [`drl`] and [`clips`]: the two textual dialects.
//! * [`translate`]: dialect-to-dialect translation with per-rule reporting.
//! * [`engine`]: knowledge sets, matching, fixpoint runs and validation.

pub mod clips;
pub mod diag;
pub mod dialect;
pub mod drl;
pub mod engine;
pub mod ir;
pub mod lower;
pub mod translate;

pub use diag::{Code, Diagnostic, Position};
pub use dialect::DialectId;
pub use engine::{Engine, KnowledgeSet, RunReport, Validity, Verdict};
pub use ir::{Fact, FactType, RuleIr, SlotKind, Term, Value, Var};
pub use lower::{Document, RuleOutcome};
pub use translate::{capabilities, translate, Feature, TranslationReport};
