//! Request and response bodies of the engine middleware, shared by the
//! server and its clients.

use rulemesh_core::{DialectId, Diagnostic, Fact};
use serde::{Deserialize, Serialize};
use uuid::Uuid;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ping {
    pub status: String,
    pub engine_id: Uuid,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineProperties {
    pub engine_id: Uuid,
    pub title: String,
    pub dialect: DialectId,
    pub version: String,
    pub knowledge_set_count: usize,
}

/// A knowledge set to create: a bare name, or a name with declarations in
/// the engine's dialect.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KnowledgeSetSpec {
    Name(String),
    Full {
        name: String,
        #[serde(default)]
        declarations: String,
    },
}

impl KnowledgeSetSpec {
    pub fn name(&self) -> &str {
        match self {
            KnowledgeSetSpec::Name(n) | KnowledgeSetSpec::Full { name: n, .. } => n,
        }
    }

    pub fn declarations(&self) -> &str {
        match self {
            KnowledgeSetSpec::Name(_) => "",
            KnowledgeSetSpec::Full { declarations, .. } => declarations,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PutKnowledgeSets {
    pub knowledge_sets: Vec<KnowledgeSetSpec>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeleteKnowledgeSets {
    pub knowledge_sets: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Error,
}

/// Per-entry outcome of a batch operation addressed by name.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemResult {
    pub name: String,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<Diagnostic>,
}

impl ItemResult {
    pub fn from_result(name: impl Into<String>, r: Result<(), Diagnostic>) -> Self {
        match r {
            Ok(()) => ItemResult { name: name.into(), status: Status::Ok, error: None },
            Err(d) => ItemResult { name: name.into(), status: Status::Error, error: Some(d) },
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == Status::Ok
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleEntry {
    pub name: String,
    pub text: String,
}

/// Rule texts for put and validate, or rule names for delete.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RulesBody {
    pub rules: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactsBody {
    pub facts: Vec<Fact>,
}

/// Per-fact outcome of assert or retract; `changed` is false when the
/// working memory already had (or lacked) the fact.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactResult {
    pub index: usize,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub changed: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<Diagnostic>,
}

impl FactResult {
    pub fn from_result(index: usize, r: Result<bool, Diagnostic>) -> Self {
        match r {
            Ok(c) => FactResult { index, status: Status::Ok, changed: Some(c), error: None },
            Err(d) => FactResult { index, status: Status::Error, changed: None, error: Some(d) },
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunBody {
    #[serde(default)]
    pub max_firings: Option<u64>,
}
