//! Control plane: discovery with liveness probing, replica-aware rule
//! propagation, and cross-engine rule copy.
//!
//! Propagation fans out from here; engines never talk to each other. The
//! target's verdicts are computed before any replica is contacted, and a
//! replica failure is reported per engine without touching the target.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use futures::future::join_all;
use rulemesh_core::engine::Verdict;
use rulemesh_core::{translate, Code, DialectId, Diagnostic};
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::api::ItemResult;
use crate::atom::{self, Author, Collection, Entry};
use crate::client::{EngineClient, RegistryClient};
use crate::error::ApiError;

/// The JSON view of an engine's registry entry.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Descriptor {
    pub id: String,
    pub title: String,
    pub dialect: DialectId,
    pub replica_group: Option<String>,
    pub endpoints: BTreeMap<String, String>,
    pub author: Author,
    pub published: Option<DateTime<Utc>>,
    pub updated: Option<DateTime<Utc>>,
    #[serde(skip)]
    entry: Entry,
}

impl Descriptor {
    pub fn from_entry(entry: Entry) -> Option<Descriptor> {
        Some(Descriptor {
            id: atom::urn(entry.id.as_ref()?),
            title: entry.title.clone(),
            dialect: entry.dialect()?,
            replica_group: entry.replica_group().map(str::to_owned),
            endpoints: entry.enclosures.iter().map(|e| (e.title.clone(), e.href.clone())).collect(),
            author: entry.author.clone(),
            published: entry.published,
            updated: entry.updated,
            entry,
        })
    }

    pub fn client(&self) -> Result<EngineClient, ApiError> {
        EngineClient::from_entry(&self.id, &self.entry)
    }

    fn matches(&self, key: &str) -> bool {
        self.id == key || atom::parse_id(key).is_some_and(|k| atom::urn(&k) == self.id)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineHandle {
    pub descriptor: Descriptor,
    pub live: bool,
    pub last_ping: DateTime<Utc>,
    /// The engine's own id as reported by its ping endpoint.
    pub engine_id: Option<Uuid>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Target,
    Replica,
}

/// What happened on one engine during a propagated operation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EngineOutcome<T> {
    pub title: String,
    pub dialect: DialectId,
    pub role: Role,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub results: Option<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<Diagnostic>,
}

impl<T> EngineOutcome<T> {
    fn new(d: &Descriptor, role: Role, r: Result<T, ApiError>) -> Self {
        let (results, error) = match r {
            Ok(t) => (Some(t), None),
            Err(e) => (None, Some(e.body.diagnostic)),
        };
        EngineOutcome { title: d.title.clone(), dialect: d.dialect, role, results, error }
    }
}

/// Outcomes keyed by engine entry id.
pub type Propagation<T> = BTreeMap<String, EngineOutcome<T>>;

pub struct ControlPlane {
    registry: RegistryClient,
}

impl ControlPlane {
    pub fn new(registry_url: &str) -> Self {
        ControlPlane { registry: RegistryClient::new(registry_url) }
    }

    pub fn registry(&self) -> &RegistryClient {
        &self.registry
    }

    /// Engine entries as the registry lists them, without probing.
    pub async fn descriptors(&self) -> Result<Vec<Descriptor>, ApiError> {
        let entries = self.registry.feed(Collection::Engines).await?;
        Ok(entries.into_iter().filter_map(Descriptor::from_entry).collect())
    }

    /// Every engine entry, each pinged once. Unreachable engines are kept
    /// with `live == false`.
    pub async fn discover(&self) -> Result<Vec<EngineHandle>, ApiError> {
        let descriptors = self.descriptors().await?;
        Ok(join_all(descriptors.into_iter().map(probe)).await)
    }

    /// Finds an engine by entry id (with or without `urn:uuid:`) or by
    /// unique title.
    pub fn resolve<'a>(handles: &'a [EngineHandle], key: &str) -> Result<&'a EngineHandle, ApiError> {
        if let Some(h) = handles.iter().find(|h| h.descriptor.matches(key)) {
            return Ok(h);
        }
        let mut by_title = handles.iter().filter(|h| h.descriptor.title == key);
        match (by_title.next(), by_title.next()) {
            (Some(h), None) => Ok(h),
            (Some(_), Some(_)) => Err(ApiError::bad_request(format!("engine title {key:?} is ambiguous; use the entry id"))),
            _ => Err(ApiError::not_found(format!("no engine {key:?} in the registry"))),
        }
    }

    /// Resolves without pinging; used by read-only proxies.
    pub async fn descriptor(&self, key: &str) -> Result<Descriptor, ApiError> {
        let handles: Vec<EngineHandle> = self
            .descriptors()
            .await?
            .into_iter()
            .map(|descriptor| EngineHandle { descriptor, live: true, last_ping: Utc::now(), engine_id: None })
            .collect();
        Ok(Self::resolve(&handles, key)?.descriptor.clone())
    }

    /// A live engine's client, or `E_ENGINE_UNREACHABLE`.
    pub async fn live_client(&self, key: &str) -> Result<(Descriptor, EngineClient), ApiError> {
        let d = self.descriptor(key).await?;
        let c = d.client()?;
        c.ping().await?;
        Ok((d, c))
    }

    fn replicas<'a>(handles: &'a [EngineHandle], target: &Descriptor) -> Vec<&'a EngineHandle> {
        let Some(group) = &target.replica_group else { return vec![] };
        handles
            .iter()
            .filter(|h| h.descriptor.id != target.id && h.descriptor.replica_group.as_ref() == Some(group))
            .collect()
    }

    /// Puts `rules` (one rule text each, in the target's dialect) on the
    /// target and, when `propagate` is set, on every replica in its group,
    /// translating where dialects differ.
    pub async fn put_rules(&self, engine: &str, ks: &str, rules: Vec<String>, propagate: bool) -> Result<Propagation<Vec<Verdict>>, ApiError> {
        let handles = if propagate { self.discover().await? } else { vec![] };
        let target = match handles.is_empty() {
            true => self.descriptor(engine).await?,
            false => Self::resolve(&handles, engine)?.descriptor.clone(),
        };
        let client = target.client()?;
        client.ping().await?;
        let verdicts = client.put_rules(ks, rules.clone()).await?;

        let mut out = Propagation::new();
        let replicas = if propagate { Self::replicas(&handles, &target) } else { vec![] };
        let calls = replicas.into_iter().map(|h| {
            let (rules, verdicts, target) = (&rules, &verdicts, &target);
            async move {
                let d = &h.descriptor;
                let r = if h.live {
                    propagate_to(d, ks, target.dialect, rules, verdicts).await
                } else {
                    Err(ApiError::from(crate::client::unreachable_diagnostic(&d.title)))
                };
                (d.id.clone(), EngineOutcome::new(d, Role::Replica, r))
            }
        });
        out.extend(join_all(calls).await);
        out.insert(target.id.clone(), EngineOutcome::new(&target, Role::Target, Ok(verdicts)));
        Ok(out)
    }

    /// Deletes rules by name on the target and, when `propagate` is set,
    /// on every live replica.
    pub async fn delete_rules(&self, engine: &str, ks: &str, names: Vec<String>, propagate: bool) -> Result<Propagation<Vec<ItemResult>>, ApiError> {
        let handles = if propagate { self.discover().await? } else { vec![] };
        let target = match handles.is_empty() {
            true => self.descriptor(engine).await?,
            false => Self::resolve(&handles, engine)?.descriptor.clone(),
        };
        let client = target.client()?;
        client.ping().await?;
        let results = client.delete_rules(ks, names.clone()).await?;

        let mut out = Propagation::new();
        let replicas = if propagate { Self::replicas(&handles, &target) } else { vec![] };
        let calls = replicas.into_iter().map(|h| {
            let names = names.clone();
            async move {
                let d = &h.descriptor;
                let r = match (h.live, d.client()) {
                    (true, Ok(c)) => c.delete_rules(ks, names).await,
                    (false, _) => Err(ApiError::from(crate::client::unreachable_diagnostic(&d.title))),
                    (_, Err(e)) => Err(e),
                };
                (d.id.clone(), EngineOutcome::new(d, Role::Replica, r))
            }
        });
        out.extend(join_all(calls).await);
        out.insert(target.id.clone(), EngineOutcome::new(&target, Role::Target, Ok(results)));
        Ok(out)
    }

    /// Copies named rules from one engine to another, translating between
    /// their dialects, validating on the destination and then installing.
    /// One verdict per requested name.
    pub async fn translate_copy(&self, src: &str, src_ks: &str, names: &[String], dst: &str, dst_ks: &str) -> Result<Vec<Verdict>, ApiError> {
        let (sd, sc) = self.live_client(src).await?;
        let (dd, dc) = self.live_client(dst).await?;
        let installed = sc.rules(src_ks, None).await?;
        let mut verdicts = Vec::with_capacity(names.len());
        for (index, name) in names.iter().enumerate() {
            let Some(rule) = installed.iter().find(|r| &r.name == name) else {
                let d = Diagnostic::new(Code::ENotFound, format!("no rule named {name:?} on the source"));
                verdicts.push(Verdict::invalid(Some(name.clone()), index, vec![d]));
                continue;
            };
            let text = match translate::translate_rule(&rule.text, sd.dialect, dd.dialect) {
                Ok(t) => t,
                Err(diags) => {
                    verdicts.push(Verdict::invalid(Some(name.clone()), index, diags));
                    continue;
                }
            };
            let checked = dc.validate_rules(dst_ks, vec![text.clone()]).await?;
            let verdict = match checked.iter().find(|v| !v.is_valid()) {
                Some(v) => v.clone(),
                None => dc.put_rules(dst_ks, vec![text]).await?.remove(0),
            };
            verdicts.push(Verdict { index, ..verdict });
        }
        Ok(verdicts)
    }
}

async fn probe(descriptor: Descriptor) -> EngineHandle {
    let ping = match descriptor.client() {
        Ok(c) => c.ping().await.ok(),
        Err(_) => None,
    };
    EngineHandle { live: ping.is_some(), last_ping: Utc::now(), engine_id: ping.map(|p| p.engine_id), descriptor }
}

/// Sends the target-valid rules to one replica. Rules the target rejected
/// are not sent; rules that cannot be translated get `E_UNSUPPORTED`.
async fn propagate_to(
    replica: &Descriptor,
    ks: &str,
    from: DialectId,
    rules: &[String],
    target_verdicts: &[Verdict],
) -> Result<Vec<Verdict>, ApiError> {
    let mut out: Vec<Option<Verdict>> = vec![None; rules.len()];
    let mut send = Vec::new();
    for (i, text) in rules.iter().enumerate() {
        let name = target_verdicts.get(i).and_then(|v| v.rule.clone());
        let translated = if from == replica.dialect {
            Ok(text.clone())
        } else {
            translate::translate_rule(text, from, replica.dialect).map_err(|diags| unsupported(replica.dialect, diags))
        };
        let accepted = target_verdicts.get(i).is_some_and(Verdict::is_valid);
        match (translated, accepted) {
            (Err(diags), _) => out[i] = Some(Verdict::invalid(name, i, diags)),
            (Ok(_), false) => {
                let d = Diagnostic::new(Code::ENotPropagated, "rejected by the target engine; not propagated");
                out[i] = Some(Verdict::invalid(name, i, vec![d]));
            }
            (Ok(t), true) => send.push((i, t)),
        }
    }
    if !send.is_empty() {
        let client = replica.client()?;
        let verdicts = client.put_rules(ks, send.iter().map(|(_, t)| t.clone()).collect()).await?;
        for ((i, _), v) in send.iter().zip(verdicts) {
            out[*i] = Some(Verdict { index: *i, ..v });
        }
    }
    Ok(out.into_iter().flatten().collect())
}

/// Translation failures surface as `E_UNSUPPORTED`; the underlying
/// diagnostics follow.
fn unsupported(to: DialectId, mut diags: Vec<Diagnostic>) -> Vec<Diagnostic> {
    if !diags.iter().any(|d| d.code == Code::EUnsupported) {
        let first = diags.first().map(|d| d.detail.clone()).unwrap_or_default();
        diags.insert(0, Diagnostic::new(Code::EUnsupported, format!("cannot translate to {to}: {first}")));
    }
    diags
}
