//! Per-engine HTTP service: `/management` and `/functional` operation sets
//! plus `/ping`, over one engine of a fixed dialect.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::{JsonRejection, PathRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::routing::{get, post};
use axum::{Json, Router};
use rulemesh_core::engine::{RunReport, Verdict, DEFAULT_MAX_FIRINGS};
use rulemesh_core::{DialectId, Engine, Fact, KnowledgeSet};
use serde::Deserialize;
use uuid::Uuid;

use crate::api::*;
use crate::error::{self, ApiError, ApiResult};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub struct EngineService {
    pub engine: Engine,
    pub engine_id: Uuid,
    pub title: String,
}

impl EngineService {
    pub fn new(dialect: DialectId, title: impl Into<String>) -> Self {
        EngineService { engine: Engine::new(dialect), engine_id: Uuid::new_v4(), title: title.into() }
    }

    pub fn properties(&self) -> EngineProperties {
        EngineProperties {
            engine_id: self.engine_id,
            title: self.title.clone(),
            dialect: self.engine.dialect(),
            version: VERSION.to_owned(),
            knowledge_set_count: self.engine.len(),
        }
    }

    fn with_ks<T>(&self, name: &str, f: impl FnOnce(&mut KnowledgeSet) -> T) -> Result<T, ApiError> {
        self.engine.with(name, f).map_err(ApiError::from)
    }
}

type Svc = State<Arc<EngineService>>;

pub fn router(service: Arc<EngineService>) -> Router {
    Router::new()
        .route("/ping", get(ping))
        .route("/management/properties", get(properties))
        .route(
            "/management/knowledge-sets",
            get(get_knowledge_sets).put(put_knowledge_sets).delete(delete_knowledge_sets),
        )
        .route("/functional/{ks}/rules", get(get_rules).put(put_rules).delete(delete_rules))
        .route("/functional/{ks}/rules:validate", post(validate_rules))
        .route("/functional/{ks}/run", post(run))
        .route("/functional/{ks}/facts", get(get_facts).put(put_facts).delete(delete_facts))
        .fallback(error::not_found)
        .method_not_allowed_fallback(error::method_not_allowed)
        .with_state(service)
}

async fn ping(State(s): Svc) -> Json<Ping> {
    Json(Ping { status: "ok".into(), engine_id: s.engine_id })
}

async fn properties(State(s): Svc) -> Json<EngineProperties> {
    Json(s.properties())
}

async fn get_knowledge_sets(State(s): Svc) -> Json<Vec<String>> {
    Json(s.engine.names())
}

async fn put_knowledge_sets(
    State(s): Svc,
    body: Result<Json<PutKnowledgeSets>, JsonRejection>,
) -> ApiResult<Vec<ItemResult>> {
    let Json(body) = body?;
    let out = body
        .knowledge_sets
        .iter()
        .map(|spec| ItemResult::from_result(spec.name(), s.engine.create_knowledge_set(spec.name(), spec.declarations())))
        .collect();
    Ok(Json(out))
}

async fn delete_knowledge_sets(
    State(s): Svc,
    body: Result<Json<DeleteKnowledgeSets>, JsonRejection>,
) -> ApiResult<Vec<ItemResult>> {
    let Json(body) = body?;
    let out = body
        .knowledge_sets
        .iter()
        .map(|name| ItemResult::from_result(name.clone(), s.engine.delete_knowledge_set(name)))
        .collect();
    Ok(Json(out))
}

#[derive(Deserialize)]
struct RulesQuery {
    filter: Option<String>,
}

async fn get_rules(
    State(s): Svc,
    ks: Result<Path<String>, PathRejection>,
    query: Result<Query<RulesQuery>, QueryRejection>,
) -> ApiResult<Vec<RuleEntry>> {
    let Path(ks) = ks?;
    let Query(query) = query?;
    let filter = query.filter.unwrap_or_default();
    let rules = s.with_ks(&ks, |k| {
        k.rules()
            .iter()
            .filter(|r| r.name.contains(filter.as_str()))
            .map(|r| RuleEntry { name: r.name.clone(), text: r.source.clone() })
            .collect()
    })?;
    Ok(Json(rules))
}

async fn put_rules(
    State(s): Svc,
    ks: Result<Path<String>, PathRejection>,
    body: Result<Json<RulesBody>, JsonRejection>,
) -> ApiResult<Vec<Verdict>> {
    let Path(ks) = ks?;
    let Json(body) = body?;
    let verdicts = s.with_ks(&ks, |k| {
        body.rules
            .iter()
            .enumerate()
            .map(|(i, text)| Verdict { index: i, ..k.add_rule(text) })
            .collect()
    })?;
    Ok(Json(verdicts))
}

async fn delete_rules(
    State(s): Svc,
    ks: Result<Path<String>, PathRejection>,
    body: Result<Json<RulesBody>, JsonRejection>,
) -> ApiResult<Vec<ItemResult>> {
    let Path(ks) = ks?;
    let Json(body) = body?;
    let out = s.with_ks(&ks, |k| {
        body.rules
            .iter()
            .map(|name| {
                let r = if k.remove_rule(name) {
                    Ok(())
                } else {
                    Err(rulemesh_core::Diagnostic::new(rulemesh_core::Code::ENotFound, format!("no rule named {name:?}")))
                };
                ItemResult::from_result(name.clone(), r)
            })
            .collect()
    })?;
    Ok(Json(out))
}

async fn validate_rules(
    State(s): Svc,
    ks: Result<Path<String>, PathRejection>,
    body: Result<Json<RulesBody>, JsonRejection>,
) -> ApiResult<Vec<Verdict>> {
    let Path(ks) = ks?;
    let Json(body) = body?;
    let verdicts = s.with_ks(&ks, |k| {
        let mut out: Vec<Verdict> = Vec::new();
        for text in &body.rules {
            for v in k.validate(text) {
                out.push(Verdict { index: out.len(), ..v });
            }
        }
        out
    })?;
    Ok(Json(verdicts))
}

async fn run(State(s): Svc, ks: Result<Path<String>, PathRejection>, body: Bytes) -> ApiResult<RunReport> {
    let Path(ks) = ks?;
    let body: RunBody = if body.iter().all(u8::is_ascii_whitespace) {
        RunBody::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(format!("invalid run body: {e}")))?
    };
    let max = body.max_firings.unwrap_or(DEFAULT_MAX_FIRINGS);
    let report = s.with_ks(&ks, |k| k.run(max))??;
    Ok(Json(report))
}

async fn get_facts(State(s): Svc, ks: Result<Path<String>, PathRejection>) -> ApiResult<Vec<Fact>> {
    let Path(ks) = ks?;
    Ok(Json(s.with_ks(&ks, |k| k.facts().cloned().collect())?))
}

async fn put_facts(
    State(s): Svc,
    ks: Result<Path<String>, PathRejection>,
    body: Result<Json<FactsBody>, JsonRejection>,
) -> ApiResult<Vec<FactResult>> {
    let Path(ks) = ks?;
    let Json(body) = body?;
    let out = s.with_ks(&ks, |k| {
        body.facts
            .into_iter()
            .enumerate()
            .map(|(i, f)| FactResult::from_result(i, k.assert_fact(f)))
            .collect()
    })?;
    Ok(Json(out))
}

async fn delete_facts(
    State(s): Svc,
    ks: Result<Path<String>, PathRejection>,
    body: Result<Json<FactsBody>, JsonRejection>,
) -> ApiResult<Vec<FactResult>> {
    let Path(ks) = ks?;
    let Json(body) = body?;
    let out = s.with_ks(&ks, |k| {
        body.facts
            .iter()
            .enumerate()
            .map(|(i, f)| FactResult::from_result(i, k.retract_fact(f)))
            .collect()
    })?;
    Ok(Json(out))
}
