use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};

use pfg_core::catalog::CatalogError;
use pfg_core::engine::EngineError;
use pfg_core::ingest::IngestError;
use pfg_core::services::ServiceError;
use pfg_core::session::SessionError;
use pfg_core::sourcegraph::GraphError;

use crate::SCHEMA_VERSION;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadRequest,
    NotFound,
    Conflict,
    UpstreamFailure,
    Unprocessable,
}

impl ErrorCode {
    pub fn status(self) -> StatusCode {
        match self {
            ErrorCode::BadRequest => StatusCode::BAD_REQUEST,
            ErrorCode::NotFound => StatusCode::NOT_FOUND,
            ErrorCode::Conflict => StatusCode::CONFLICT,
            ErrorCode::UpstreamFailure => StatusCode::BAD_GATEWAY,
            ErrorCode::Unprocessable => StatusCode::UNPROCESSABLE_ENTITY,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<serde_json::Value>,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        ApiError {
            code,
            message: message.into(),
            detail: None,
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::BadRequest, message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::NotFound, message)
    }

    pub fn conflict(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::Conflict, message)
    }

    pub fn unprocessable(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::Unprocessable, message)
    }

    pub fn with_detail(mut self, detail: serde_json::Value) -> Self {
        self.detail = Some(detail);
        self
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?}: {}", self.code, self.message)
    }
}

#[derive(Serialize)]
struct Envelope<'a> {
    schema_version: u32,
    error: &'a ApiError,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = Envelope {
            schema_version: SCHEMA_VERSION,
            error: &self,
        };
        (self.code.status(), Json(body)).into_response()
    }
}

fn service_code(e: &ServiceError) -> ErrorCode {
    match e {
        ServiceError::UnknownService(_) => ErrorCode::NotFound,
        ServiceError::InputArity { .. } => ErrorCode::BadRequest,
        ServiceError::Upstream { .. } | ServiceError::InvalidResponse { .. } => ErrorCode::UpstreamFailure,
    }
}

fn engine_code(e: &EngineError) -> ErrorCode {
    match e {
        EngineError::Service(s) => service_code(s),
        _ => ErrorCode::Unprocessable,
    }
}

fn graph_code(e: &GraphError) -> ErrorCode {
    match e {
        GraphError::Engine(e) => engine_code(e),
        _ => ErrorCode::Unprocessable,
    }
}

fn catalog_code(e: &CatalogError) -> ErrorCode {
    match e {
        CatalogError::DuplicateId(_) => ErrorCode::Conflict,
        CatalogError::UnknownSource(_) | CatalogError::UnknownAttribute(..) => ErrorCode::NotFound,
        _ => ErrorCode::Unprocessable,
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        use SessionError as S;
        let code = match &e {
            S::EmptyPaste | S::UnsupportedPaste(_) | S::BadFeedback(_) | S::BadFormat(_) | S::Log(_) => {
                ErrorCode::BadRequest
            }
            S::UnknownSuggestion(_) | S::UnknownColumn(_) | S::UnknownRow(_) => ErrorCode::NotFound,
            S::Contradictory(_) | S::DuplicateColumnName(_) => ErrorCode::Conflict,
            S::Cleaning(_) | S::OriginUnreadable(_) | S::EmptyGrid | S::NoGeoColumns => ErrorCode::Unprocessable,
            S::Engine(e) => engine_code(e),
            S::Graph(e) => graph_code(e),
            S::Catalog(e) => catalog_code(e),
            S::Ingest(IngestError::Catalog(e)) => catalog_code(e),
            S::Extract(_) | S::Typist(_) | S::Ingest(_) => ErrorCode::Unprocessable,
        };
        ApiError::new(code, e.to_string())
    }
}

impl From<IngestError> for ApiError {
    fn from(e: IngestError) -> Self {
        let code = match &e {
            IngestError::Catalog(c) => catalog_code(c),
            IngestError::Extract(_) => ErrorCode::Unprocessable,
        };
        ApiError::new(code, e.to_string())
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        ApiError::new(engine_code(&e), e.to_string())
    }
}
