//! Structured diagnostics shared by parsing, checking, the engine and the
//! HTTP surfaces.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Machine-readable diagnostic code. Serialized as `E_*` strings.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Code {
    EGrammar,
    EUnknownType,
    EUnknownSlot,
    EUnboundVar,
    EKindMismatch,
    EIncompleteAction,
    EEmptyCondition,
    EUnsupported,
    EUnprintable,
    EUnchecked,
    EExists,
    EDuplicateRule,
    ENotFound,
    EDiverged,
    ENotPropagated,
    EBadRequest,
    EEngineUnreachable,
    ERegistryUnreachable,
    EUpstream,
}

impl Code {
    pub fn as_str(self) -> &'static str {
        match self {
            Code::EGrammar => "E_GRAMMAR",
            Code::EUnknownType => "E_UNKNOWN_TYPE",
            Code::EUnknownSlot => "E_UNKNOWN_SLOT",
            Code::EUnboundVar => "E_UNBOUND_VAR",
            Code::EKindMismatch => "E_KIND_MISMATCH",
            Code::EIncompleteAction => "E_INCOMPLETE_ACTION",
            Code::EEmptyCondition => "E_EMPTY_CONDITION",
            Code::EUnsupported => "E_UNSUPPORTED",
            Code::EUnprintable => "E_UNPRINTABLE",
            Code::EUnchecked => "E_UNCHECKED",
            Code::EExists => "E_EXISTS",
            Code::EDuplicateRule => "E_DUPLICATE_RULE",
            Code::ENotFound => "E_NOT_FOUND",
            Code::EDiverged => "E_DIVERGED",
            Code::ENotPropagated => "E_NOT_PROPAGATED",
            Code::EBadRequest => "E_BAD_REQUEST",
            Code::EEngineUnreachable => "E_ENGINE_UNREACHABLE",
            Code::ERegistryUnreachable => "E_REGISTRY_UNREACHABLE",
            Code::EUpstream => "E_UPSTREAM",
        }
    }
}

impl fmt::Display for Code {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// 1-based line and column (columns count characters, not bytes).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Position {
    pub line: u32,
    pub column: u32,
}

impl Position {
    pub fn new(line: u32, column: u32) -> Self {
        Position { line, column }
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

/// Location of a diagnostic inside a rule, used by the dialect layers to map
/// check results back onto source positions.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Site {
    Pattern(usize),
    PatternSlot(usize, String),
    Guard(usize),
    Action(usize),
    ActionSlot(usize, String),
}

/// One problem report. This is also the JSON error body of every HTTP
/// endpoint: `{"code": "...", "detail": "...", "position": {...}?}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub code: Code,
    pub detail: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<Position>,
    #[serde(skip)]
    pub site: Option<Site>,
}

impl Diagnostic {
    pub fn new(code: Code, detail: impl Into<String>) -> Self {
        Diagnostic { code, detail: detail.into(), position: None, site: None }
    }

    pub fn at(mut self, position: Position) -> Self {
        self.position = Some(position);
        self
    }

    pub fn with_site(mut self, site: Site) -> Self {
        self.site = Some(site);
        self
    }

    pub fn grammar(detail: impl Into<String>, position: Position) -> Self {
        Diagnostic::new(Code::EGrammar, detail).at(position)
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.position {
            Some(p) => write!(f, "{} at {}: {}", self.code, p, self.detail),
            None => write!(f, "{}: {}", self.code, self.detail),
        }
    }
}

impl std::error::Error for Diagnostic {}
