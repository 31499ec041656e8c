//! Gateway JSON API used by the web console and operators, plus the
//! console's static assets. The gateway holds no state of its own.

use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::{JsonRejection, PathRejection};
use axum::extract::{Path, RawQuery, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{any, get, post};
use axum::{Json, Router};
use rulemesh_core::engine::{RunReport, Verdict};
use rulemesh_core::translate::TranslationReport;
use rulemesh_core::{translate, DialectId};
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

use crate::api::ItemResult;
use crate::control::{ControlPlane, EngineHandle, Propagation};
use crate::error::{self, ApiError, ApiResult, ErrorBody};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Endpoint {
    pub method: String,
    pub path: String,
}

/// Every route under `/api`, for clients that check their own usage.
pub const ENDPOINTS: &[(&str, &str)] = &[
    ("GET", "/api/endpoints"),
    ("GET", "/api/engines"),
    ("POST", "/api/translate"),
    ("POST", "/api/put-rules"),
    ("POST", "/api/delete-rules"),
    ("POST", "/api/translate-copy"),
    ("POST", "/api/validate"),
    ("POST", "/api/run"),
    ("GET", "/api/engines/{engine}/ping"),
    ("GET", "/api/engines/{engine}/management/properties"),
    ("GET", "/api/engines/{engine}/management/knowledge-sets"),
    ("PUT", "/api/engines/{engine}/management/knowledge-sets"),
    ("DELETE", "/api/engines/{engine}/management/knowledge-sets"),
    ("GET", "/api/engines/{engine}/functional/{ks}/rules"),
    ("PUT", "/api/engines/{engine}/functional/{ks}/rules"),
    ("DELETE", "/api/engines/{engine}/functional/{ks}/rules"),
    ("POST", "/api/engines/{engine}/functional/{ks}/rules:validate"),
    ("POST", "/api/engines/{engine}/functional/{ks}/run"),
    ("GET", "/api/engines/{engine}/functional/{ks}/facts"),
    ("PUT", "/api/engines/{engine}/functional/{ks}/facts"),
    ("DELETE", "/api/engines/{engine}/functional/{ks}/facts"),
];

#[derive(Clone, Debug, Deserialize, Serialize)]
pub struct TranslateRequest {
    pub text: String,
    pub from: DialectId,
    pub to: DialectId,
    /// Fact-type declarations in the source dialect; enables full checks.
    #[serde(default)]
    pub declarations: String,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, Deserialize, Serialize)]
pub struct PutRulesRequest {
    pub engine: String,
    pub ks: String,
    pub rules: Vec<String>,
    #[serde(default = "yes")]
    pub propagate: bool,
}

/// `rules` holds rule names.
#[derive(Clone, Debug, Deserialize, Serialize)]
pub struct DeleteRulesRequest {
    pub engine: String,
    pub ks: String,
    pub rules: Vec<String>,
    #[serde(default = "yes")]
    pub propagate: bool,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
pub struct TranslateCopyRequest {
    pub src_engine: String,
    pub src_ks: String,
    pub rules: Vec<String>,
    pub dst_engine: String,
    pub dst_ks: String,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
pub struct EngineKsRequest {
    pub engine: String,
    pub ks: String,
    #[serde(default)]
    pub rules: Vec<String>,
    #[serde(default)]
    pub max_firings: Option<u64>,
}

pub struct Gateway {
    pub control: ControlPlane,
}

type Gw = State<Arc<Gateway>>;

pub fn router(control: ControlPlane, assets: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/endpoints", get(endpoints))
        .route("/engines", get(engines))
        .route("/translate", post(translate_text))
        .route("/put-rules", post(put_rules))
        .route("/delete-rules", post(delete_rules))
        .route("/translate-copy", post(translate_copy))
        .route("/validate", post(validate))
        .route("/run", post(run))
        .route("/engines/{engine}/{*rest}", any(proxy))
        .fallback(error::not_found)
        .method_not_allowed_fallback(error::method_not_allowed)
        .with_state(Arc::new(Gateway { control }));
    let app = Router::new().nest("/api", api);
    match assets {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app.fallback(error::not_found),
    }
}

async fn endpoints() -> Json<Vec<Endpoint>> {
    Json(ENDPOINTS.iter().map(|(m, p)| Endpoint { method: (*m).into(), path: (*p).into() }).collect())
}

async fn engines(State(g): Gw) -> ApiResult<Vec<EngineHandle>> {
    Ok(Json(g.control.discover().await?))
}

async fn translate_text(body: Result<Json<TranslateRequest>, JsonRejection>) -> ApiResult<TranslationReport> {
    let Json(req) = body?;
    let (types, diags) = req.from.parse_declarations(&req.declarations);
    if let Some(d) = diags.into_iter().next() {
        return Err(d.into());
    }
    Ok(Json(translate(&req.text, req.from, req.to, &types)?))
}

async fn put_rules(State(g): Gw, body: Result<Json<PutRulesRequest>, JsonRejection>) -> ApiResult<Propagation<Vec<Verdict>>> {
    let Json(req) = body?;
    Ok(Json(g.control.put_rules(&req.engine, &req.ks, req.rules, req.propagate).await?))
}

async fn delete_rules(State(g): Gw, body: Result<Json<DeleteRulesRequest>, JsonRejection>) -> ApiResult<Propagation<Vec<ItemResult>>> {
    let Json(req) = body?;
    Ok(Json(g.control.delete_rules(&req.engine, &req.ks, req.rules, req.propagate).await?))
}

async fn translate_copy(State(g): Gw, body: Result<Json<TranslateCopyRequest>, JsonRejection>) -> ApiResult<Vec<Verdict>> {
    let Json(r) = body?;
    Ok(Json(g.control.translate_copy(&r.src_engine, &r.src_ks, &r.rules, &r.dst_engine, &r.dst_ks).await?))
}

async fn validate(State(g): Gw, body: Result<Json<EngineKsRequest>, JsonRejection>) -> ApiResult<Vec<Verdict>> {
    let Json(req) = body?;
    let (_, client) = g.control.live_client(&req.engine).await?;
    Ok(Json(client.validate_rules(&req.ks, req.rules).await?))
}

async fn run(State(g): Gw, body: Result<Json<EngineKsRequest>, JsonRejection>) -> ApiResult<RunReport> {
    let Json(req) = body?;
    let (_, client) = g.control.live_client(&req.engine).await?;
    Ok(Json(client.run(&req.ks, req.max_firings).await?))
}

/// Forwards `/api/engines/{engine}/<path>` to the engine's middleware.
/// Error bodies gain the engine's entry id.
async fn proxy(
    State(g): Gw,
    method: Method,
    path: Result<Path<(String, String)>, PathRejection>,
    RawQuery(query): RawQuery,
    body: Bytes,
) -> Result<Response, ApiError> {
    let Path((engine, rest)) = path?;
    let d = g.control.descriptor(&engine).await?;
    let client = d.client()?;
    let mut url = client.url(&rest).ok_or_else(|| ApiError::not_found(format!("no engine route {rest:?}")))?;
    if let Some(q) = query {
        url = format!("{url}?{q}");
    }
    let body = (!body.is_empty()).then(|| body.to_vec());
    let (status, ct, bytes) = client.raw(method, &url, body).await?;
    if !status.is_success() {
        if let Ok(mut b) = serde_json::from_slice::<ErrorBody>(&bytes) {
            b.engine = Some(d.id.clone());
            return Ok((status, Json(b)).into_response());
        }
    }
    let mut resp = (StatusCode::from_u16(status.as_u16()).unwrap_or(StatusCode::BAD_GATEWAY), bytes).into_response();
    if let Some(v) = ct.and_then(|c| HeaderValue::from_str(&c).ok()) {
        resp.headers_mut().insert(header::CONTENT_TYPE, v);
    }
    Ok(resp)
}
