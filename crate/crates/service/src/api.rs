//! JSON-over-HTTP query service.

use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use finkpi::extraction::MetricTaxonomy;
use finkpi::rules::Status;
use finkpi::store::{AuditEvent, KpiStore, RecordFilter};
use finkpi::text_to_sql::{IntentError, QueryError, TextToSql};
use serde::{Deserialize, Serialize};

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<KpiStore>,
    pub agent: Arc<TextToSql>,
    pub taxonomy: Arc<MetricTaxonomy>,
    /// When set, every route but `/health` needs `Authorization: Bearer <token>`.
    pub bearer_token: Option<Arc<str>>,
}

impl AppState {
    pub fn new(store: KpiStore, agent: TextToSql) -> Self {
        let taxonomy = Arc::new(agent.taxonomy().clone());
        Self { store: Arc::new(store), agent: Arc::new(agent), taxonomy, bearer_token: None }
    }

    pub fn with_bearer_token(mut self, token: Option<String>) -> Self {
        self.bearer_token = token.map(Arc::from);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRequest {
    pub question: String,
}

/// Body of every non-2xx response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phrase: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audit_id: Option<String>,
}

pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, error: &str, message: impl Into<String>) -> Self {
        Self { status, body: ErrorBody { error: error.into(), message: message.into(), phrase: None, audit_id: None } }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    /// A 500 whose cause is written to the audit log.
    fn internal(store: &KpiStore, context: &str, message: String) -> Self {
        let audit_id =
            store.audit().append(AuditEvent::Error { context: context.into(), message: message.clone() }).ok();
        let mut e = Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message);
        e.body.audit_id = audit_id;
        e
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

async fn schema(State(s): State<AppState>) -> Response {
    Json(s.store.export_schema_card(&s.taxonomy)).into_response()
}

#[derive(Debug, Deserialize)]
pub struct RecordsParams {
    metric: Option<String>,
    year: Option<i32>,
    status: Option<Status>,
    #[serde(default)]
    offset: usize,
    limit: Option<usize>,
}

async fn records(
    State(s): State<AppState>,
    params: Result<Query<RecordsParams>, QueryRejection>,
) -> Result<Response, ApiError> {
    let Query(p) = params.map_err(|e| ApiError::bad_request(e.body_text()))?;
    if p.limit == Some(0) {
        return Err(ApiError::bad_request("limit must be at least 1"));
    }
    let filter = RecordFilter { metric: p.metric, year: p.year, status: p.status, offset: p.offset, limit: p.limit };
    Ok(Json(s.store.page(&filter)).into_response())
}

async fn query(
    State(s): State<AppState>,
    body: Result<Json<QueryRequest>, JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(req) = body.map_err(|e| ApiError::bad_request(e.body_text()))?;
    if req.question.trim().is_empty() {
        return Err(ApiError::bad_request("question is empty"));
    }
    let store = s.store.clone();
    let agent = s.agent.clone();
    let answered = tokio::task::spawn_blocking(move || agent.answer(&store, &req.question))
        .await
        .map_err(|e| ApiError::internal(&s.store, "query task", e.to_string()))?;
    match answered {
        Ok(bundle) => Ok(Json(bundle).into_response()),
        Err(QueryError::ClarificationNeeded(e)) => {
            let mut err = ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "clarification_needed", e.to_string());
            err.body.phrase = match e {
                IntentError::UnrecognizedMetric { phrase } => Some(phrase),
                _ => None,
            };
            Err(err)
        }
        Err(e) => Err(ApiError::internal(&s.store, "query", e.to_string())),
    }
}

async fn audit_entry(State(s): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    match s.store.audit().find(&id) {
        Ok(Some(entry)) => Ok(Json(entry).into_response()),
        Ok(None) => Err(ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("no audit entry {id}"))),
        Err(e) => Err(ApiError::internal(&s.store, "audit lookup", e.to_string())),
    }
}

async fn require_token(State(s): State<AppState>, req: Request, next: Next) -> Response {
    let Some(token) = &s.bearer_token else { return next.run(req).await };
    let presented =
        req.headers().get(header::AUTHORIZATION).and_then(|v| v.to_str().ok()).and_then(|v| v.strip_prefix("Bearer "));
    if presented == Some(token.as_ref()) {
        next.run(req).await
    } else {
        ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or wrong bearer token").into_response()
    }
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route")
}

pub fn router(state: AppState) -> Router {
    let protected = Router::new()
        .route("/query", post(query))
        .route("/schema", get(schema))
        .route("/records", get(records))
        .route("/audit/{id}", get(audit_entry))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token));
    Router::new().route("/health", get(health)).merge(protected).fallback(not_found).with_state(state)
}
