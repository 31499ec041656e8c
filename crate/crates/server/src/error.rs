//! JSON error responses shared by every HTTP surface.

use axum::extract::rejection::{JsonRejection, PathRejection, QueryRejection};
use axum::http::{Method, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::Json;
use rulemesh_core::{Code, Diagnostic};
use serde::{Deserialize, Serialize};

/// Error body: a diagnostic plus, on the gateway, the engine it came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    #[serde(flatten)]
    pub diagnostic: Diagnostic,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub engine: Option<String>,
}

#[derive(Clone, Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

pub fn status_for(code: Code) -> StatusCode {
    match code {
        Code::ENotFound => StatusCode::NOT_FOUND,
        Code::EExists | Code::EDuplicateRule => StatusCode::CONFLICT,
        Code::EDiverged => StatusCode::UNPROCESSABLE_ENTITY,
        Code::EEngineUnreachable | Code::EUpstream => StatusCode::BAD_GATEWAY,
        Code::ERegistryUnreachable => StatusCode::SERVICE_UNAVAILABLE,
        _ => StatusCode::BAD_REQUEST,
    }
}

impl ApiError {
    pub fn new(code: Code, detail: impl Into<String>) -> Self {
        Diagnostic::new(code, detail).into()
    }

    pub fn bad_request(detail: impl Into<String>) -> Self {
        ApiError::new(Code::EBadRequest, detail)
    }

    pub fn not_found(detail: impl Into<String>) -> Self {
        ApiError::new(Code::ENotFound, detail)
    }

    pub fn with_status(mut self, status: StatusCode) -> Self {
        self.status = status;
        self
    }

    pub fn for_engine(mut self, engine: impl Into<String>) -> Self {
        self.body.engine = Some(engine.into());
        self
    }

    pub fn code(&self) -> Code {
        self.body.diagnostic.code
    }
}

impl From<Diagnostic> for ApiError {
    fn from(diagnostic: Diagnostic) -> Self {
        ApiError { status: status_for(diagnostic.code), body: ErrorBody { diagnostic, engine: None } }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::bad_request(r.body_text())
    }
}

impl From<PathRejection> for ApiError {
    fn from(r: PathRejection) -> Self {
        ApiError::bad_request(r.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(r: QueryRejection) -> Self {
        ApiError::bad_request(r.body_text())
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if let Some(e) = &self.body.engine {
            write!(f, "{e}: ")?;
        }
        write!(f, "{}", self.body.diagnostic)
    }
}

impl std::error::Error for ApiError {}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

pub type ApiResult<T> = Result<Json<T>, ApiError>;

pub async fn not_found(uri: Uri) -> ApiError {
    ApiError::not_found(format!("no route for {}", uri.path()))
}

pub async fn method_not_allowed(method: Method, uri: Uri) -> ApiError {
    ApiError::bad_request(format!("{method} is not supported on {}", uri.path())).with_status(StatusCode::METHOD_NOT_ALLOWED)
}
