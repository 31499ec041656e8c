//! HTTP clients for the registry and for engine middleware.

use std::time::Duration;

use reqwest::{Method, StatusCode};
use rulemesh_core::engine::{RunReport, Verdict};
use rulemesh_core::{Code, Diagnostic, Fact};
use serde::de::DeserializeOwned;
use serde::Serialize;
use uuid::Uuid;

use crate::api::*;
use crate::atom::{self, Collection, Entry};
use crate::error::{ApiError, ErrorBody};

pub const PING_TIMEOUT: Duration = Duration::from_secs(2);
pub const CALL_TIMEOUT: Duration = Duration::from_secs(30);

fn http() -> reqwest::Client {
    reqwest::Client::builder().timeout(CALL_TIMEOUT).build().expect("default HTTP client")
}

/// Maps a non-success response to an error, keeping the upstream status and
/// diagnostic when the body is one of ours.
async fn upstream_error(resp: reqwest::Response) -> ApiError {
    let status = resp.status();
    let body = resp.bytes().await.unwrap_or_default();
    match serde_json::from_slice::<ErrorBody>(&body) {
        Ok(b) => ApiError { status, body: b },
        Err(_) => ApiError::new(Code::EUpstream, format!("upstream answered {status}: {}", String::from_utf8_lossy(&body)))
            .with_status(StatusCode::BAD_GATEWAY),
    }
}

pub struct RegistryClient {
    base: String,
    http: reqwest::Client,
}

impl RegistryClient {
    pub fn new(base: &str) -> Self {
        RegistryClient { base: base.trim_end_matches('/').to_owned(), http: http() }
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    fn unreachable(&self, e: reqwest::Error) -> ApiError {
        ApiError::new(Code::ERegistryUnreachable, format!("registry {} unreachable: {e}", self.base))
    }

    async fn send(&self, req: reqwest::RequestBuilder) -> Result<String, ApiError> {
        let resp = req.send().await.map_err(|e| self.unreachable(e))?;
        if !resp.status().is_success() {
            return Err(upstream_error(resp).await);
        }
        resp.text().await.map_err(|e| self.unreachable(e))
    }

    pub async fn feed(&self, c: Collection) -> Result<Vec<Entry>, ApiError> {
        let xml = self.send(self.http.get(format!("{}/registry/{c}", self.base))).await?;
        Ok(atom::parse_feed(&xml).map_err(|d| ApiError::new(Code::EUpstream, d.detail))?)
    }

    pub async fn create(&self, c: Collection, entry: &Entry) -> Result<Entry, ApiError> {
        let req = self
            .http
            .post(format!("{}/registry/{c}", self.base))
            .header(reqwest::header::CONTENT_TYPE, crate::registry::ENTRY_TYPE)
            .body(entry.to_xml(c));
        let xml = self.send(req).await?;
        Ok(atom::parse_entry(&xml).map_err(|d| ApiError::new(Code::EUpstream, d.detail))?)
    }

    pub async fn delete(&self, c: Collection, id: Uuid) -> Result<(), ApiError> {
        self.send(self.http.delete(format!("{}/registry/{c}/{id}", self.base))).await.map(drop)
    }
}

/// Client for one engine's middleware, addressed through the three
/// enclosure links of its registry entry.
#[derive(Clone)]
pub struct EngineClient {
    name: String,
    functional: String,
    management: String,
    ping: String,
    http: reqwest::Client,
}

impl EngineClient {
    /// `name` is used to attribute errors.
    pub fn from_entry(name: impl Into<String>, entry: &Entry) -> Result<Self, ApiError> {
        let link = |t: &str| {
            entry
                .enclosure(t)
                .map(|h| h.trim_end_matches('/').to_owned())
                .ok_or_else(|| ApiError::new(Code::EUpstream, format!("entry {:?} has no {t} link", entry.title)))
        };
        Ok(EngineClient { name: name.into(), functional: link("functional")?, management: link("management")?, ping: link("ping")?, http: http() })
    }

    pub fn from_base(base: &str) -> Self {
        let base = base.trim_end_matches('/');
        EngineClient {
            name: base.to_owned(),
            functional: format!("{base}/functional"),
            management: format!("{base}/management"),
            ping: format!("{base}/ping"),
            http: http(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    fn unreachable(&self, e: reqwest::Error) -> ApiError {
        ApiError::new(Code::EEngineUnreachable, format!("engine unreachable: {e}")).for_engine(&self.name)
    }

    /// URL for a path below the engine, e.g. `management/properties` or
    /// `functional/demo/rules`.
    pub fn url(&self, path: &str) -> Option<String> {
        let path = path.trim_start_matches('/');
        let (head, rest) = path.split_once('/').unwrap_or((path, ""));
        let base = match head {
            "functional" => &self.functional,
            "management" => &self.management,
            "ping" if rest.is_empty() => return Some(self.ping.clone()),
            _ => return None,
        };
        Some(if rest.is_empty() { base.clone() } else { format!("{base}/{rest}") })
    }

    /// Sends a request and returns status, content type and body unchanged.
    /// Transport failures become `E_ENGINE_UNREACHABLE`.
    pub async fn raw(&self, method: Method, url: &str, body: Option<Vec<u8>>) -> Result<(StatusCode, Option<String>, Vec<u8>), ApiError> {
        let mut req = self.http.request(method, url);
        if let Some(b) = body {
            req = req.header(reqwest::header::CONTENT_TYPE, "application/json").body(b);
        }
        let resp = req.send().await.map_err(|e| self.unreachable(e))?;
        let status = resp.status();
        let ct = resp.headers().get(reqwest::header::CONTENT_TYPE).and_then(|v| v.to_str().ok()).map(str::to_owned);
        let body = resp.bytes().await.map_err(|e| self.unreachable(e))?;
        Ok((status, ct, body.to_vec()))
    }

    async fn call<B: Serialize, T: DeserializeOwned>(&self, method: Method, url: String, body: Option<&B>) -> Result<T, ApiError> {
        let mut req = self.http.request(method, url);
        if let Some(b) = body {
            req = req.json(b);
        }
        let resp = req.send().await.map_err(|e| self.unreachable(e))?;
        if !resp.status().is_success() {
            return Err(upstream_error(resp).await.for_engine(&self.name));
        }
        resp.json().await.map_err(|e| ApiError::new(Code::EUpstream, format!("unexpected response: {e}")).for_engine(&self.name))
    }

    async fn get<T: DeserializeOwned>(&self, url: String) -> Result<T, ApiError> {
        self.call::<(), T>(Method::GET, url, None).await
    }

    pub async fn ping(&self) -> Result<Ping, ApiError> {
        let resp = self.http.get(&self.ping).timeout(PING_TIMEOUT).send().await.map_err(|e| self.unreachable(e))?;
        if !resp.status().is_success() {
            return Err(upstream_error(resp).await.for_engine(&self.name));
        }
        resp.json().await.map_err(|e| self.unreachable(e))
    }

    pub async fn properties(&self) -> Result<EngineProperties, ApiError> {
        self.get(format!("{}/properties", self.management)).await
    }

    pub async fn knowledge_sets(&self) -> Result<Vec<String>, ApiError> {
        self.get(format!("{}/knowledge-sets", self.management)).await
    }

    pub async fn put_knowledge_sets(&self, specs: Vec<KnowledgeSetSpec>) -> Result<Vec<ItemResult>, ApiError> {
        let body = PutKnowledgeSets { knowledge_sets: specs };
        self.call(Method::PUT, format!("{}/knowledge-sets", self.management), Some(&body)).await
    }

    pub async fn delete_knowledge_sets(&self, names: Vec<String>) -> Result<Vec<ItemResult>, ApiError> {
        let body = DeleteKnowledgeSets { knowledge_sets: names };
        self.call(Method::DELETE, format!("{}/knowledge-sets", self.management), Some(&body)).await
    }

    fn ks_url(&self, ks: &str, tail: &str) -> String {
        match url::Url::parse(&self.functional) {
            Ok(mut u) if !u.cannot_be_a_base() => {
                u.path_segments_mut().expect("base URL").push(ks).push(tail);
                u.into()
            }
            _ => format!("{}/{ks}/{tail}", self.functional),
        }
    }

    pub async fn rules(&self, ks: &str, filter: Option<&str>) -> Result<Vec<RuleEntry>, ApiError> {
        let mut url = self.ks_url(ks, "rules");
        if let Some(f) = filter {
            url = format!("{url}?filter={}", urlencode(f));
        }
        self.get(url).await
    }

    pub async fn put_rules(&self, ks: &str, rules: Vec<String>) -> Result<Vec<Verdict>, ApiError> {
        self.call(Method::PUT, self.ks_url(ks, "rules"), Some(&RulesBody { rules })).await
    }

    pub async fn delete_rules(&self, ks: &str, names: Vec<String>) -> Result<Vec<ItemResult>, ApiError> {
        self.call(Method::DELETE, self.ks_url(ks, "rules"), Some(&RulesBody { rules: names })).await
    }

    pub async fn validate_rules(&self, ks: &str, rules: Vec<String>) -> Result<Vec<Verdict>, ApiError> {
        self.call(Method::POST, self.ks_url(ks, "rules:validate"), Some(&RulesBody { rules })).await
    }

    pub async fn run(&self, ks: &str, max_firings: Option<u64>) -> Result<RunReport, ApiError> {
        self.call(Method::POST, self.ks_url(ks, "run"), Some(&RunBody { max_firings })).await
    }

    pub async fn facts(&self, ks: &str) -> Result<Vec<Fact>, ApiError> {
        self.get(self.ks_url(ks, "facts")).await
    }

    pub async fn put_facts(&self, ks: &str, facts: Vec<Fact>) -> Result<Vec<FactResult>, ApiError> {
        self.call(Method::PUT, self.ks_url(ks, "facts"), Some(&FactsBody { facts })).await
    }

    pub async fn delete_facts(&self, ks: &str, facts: Vec<Fact>) -> Result<Vec<FactResult>, ApiError> {
        self.call(Method::DELETE, self.ks_url(ks, "facts"), Some(&FactsBody { facts })).await
    }
}

fn urlencode(s: &str) -> String {
    url::form_urlencoded::byte_serialize(s.as_bytes()).collect()
}

/// Diagnostic used when an engine cannot be reached at all.
pub fn unreachable_diagnostic(name: &str) -> Diagnostic {
    Diagnostic::new(Code::EEngineUnreachable, format!("engine {name} is not live"))
}
