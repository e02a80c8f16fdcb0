use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::Router;
use finkpi::extraction::{MetricTaxonomy, MockBackend};
use finkpi::fixtures;
use finkpi::pipeline::{Pipeline, ReviewLog};
use finkpi::store::{AuditLog, FixedClock, KpiStore, SCHEMA_VERSION};
use finkpi::text_to_sql::{AnswerBundle, TextToSql};
use finkpi_service::{router, AppState};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn state() -> AppState {
    let audit = Arc::new(AuditLog::in_memory(Arc::new(FixedClock::epoch())));
    let store = KpiStore::in_memory(SCHEMA_VERSION).with_audit(audit);
    Pipeline::mock().ingest_document(&fixtures::guidance_release(), &store, &ReviewLog::in_memory()).unwrap();
    let agent = TextToSql::new(MetricTaxonomy::default(), Arc::new(MockBackend::new(0)));
    AppState::new(store, agent)
}

fn app() -> Router {
    router(state())
}

fn schema(name: &str) -> jsonschema::Validator {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../docs/api").join(format!("{name}.schema.json"));
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    jsonschema::validator_for(&serde_json::from_str(&text).unwrap()).unwrap()
}

fn assert_conforms(name: &str, body: &Value) {
    let v = schema(name);
    let errors: Vec<String> = v.iter_errors(body).map(|e| format!("{} at {}", e, e.instance_path())).collect();
    assert!(errors.is_empty(), "{name}: {errors:?}\n{body:#}");
}

async fn send(app: &Router, req: Request<Body>) -> (StatusCode, Value) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

fn get(uri: &str) -> Request<Body> {
    Request::get(uri).body(Body::empty()).unwrap()
}

fn post_query(body: impl Into<Body>) -> Request<Body> {
    Request::post("/query").header(header::CONTENT_TYPE, "application/json").body(body.into()).unwrap()
}

#[tokio::test]
async fn health_is_ok() {
    let (status, body) = send(&app(), get("/health")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, json!({"status": "ok"}));
    assert_conforms("health", &body);
}

#[tokio::test]
async fn query_answers_operating_margin() {
    let app = app();
    let (status, body) = send(&app, post_query(r#"{"question":"What was the Q4 2024 operating margin?"}"#)).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert!(body["explanation"].as_str().unwrap().contains("14.6"), "{body}");
    for field in ["sql", "explanation", "columns", "rows", "validation", "attempts", "audit_id"] {
        assert!(body.get(field).is_some(), "missing {field}");
    }
    assert_conforms("answer_bundle", &body);
    let bundle: AnswerBundle = serde_json::from_value(body.clone()).unwrap();
    assert_eq!(serde_json::to_value(&bundle).unwrap(), body);
}

#[tokio::test]
async fn query_guidance_range() {
    let (status, body) = send(&app(), post_query(r#"{"question":"FY 2025 operating margin guidance"}"#)).await;
    assert_eq!(status, StatusCode::OK);
    let row = &body["rows"][0];
    assert_eq!((row[1].as_str(), row[2].as_str(), row[3].as_str()), (Some("16"), Some("15"), Some("17")));
    assert!(body["explanation"].as_str().unwrap().contains("16.0%"));
}

#[tokio::test]
async fn audit_id_resolves() {
    let app = app();
    let (_, body) = send(&app, post_query(r#"{"question":"Q4 2024 operating margin"}"#)).await;
    let id = body["audit_id"].as_str().unwrap();
    let (status, entry) = send(&app, get(&format!("/audit/{id}"))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(entry["event"], "query");
    assert_eq!(entry["sql"], body["sql"]);
    assert_conforms("audit_entry", &entry);
    let (status, err) = send(&app, get("/audit/audit-99999999")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_conforms("error", &err);
}

#[tokio::test]
async fn malformed_or_empty_body_is_400() {
    let app = app();
    for body in ["", "{", r#"{"q":"x"}"#, r#"{"question":"   "}"#, r#"{"question":7}"#] {
        let (status, err) = send(&app, post_query(body)).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{body:?}");
        assert_eq!(err["error"], "bad_request");
        assert_conforms("error", &err);
    }
    let req = Request::post("/query").body(Body::from(r#"{"question":"revenue"}"#)).unwrap();
    assert_eq!(send(&app, req).await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn unknown_metric_is_422_with_phrase() {
    let (status, err) = send(&app(), post_query(r#"{"question":"What was Q4 2024 headcount?"}"#)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(err["error"], "clarification_needed");
    assert!(err["phrase"].as_str().unwrap().contains("headcount"), "{err}");
    assert_conforms("error", &err);
}

#[tokio::test]
async fn schema_card() {
    let (status, body) = send(&app(), get("/schema")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["table"], "kpi");
    assert_conforms("schema_card", &body);
}

#[tokio::test]
async fn records_paginate_and_filter() {
    let app = app();
    let (status, page) = send(&app, get("/records?metric=operating_margin&limit=2")).await;
    assert_eq!(status, StatusCode::OK);
    assert_conforms("record_page", &page);
    assert_eq!(page["total"], 3);
    assert_eq!(page["records"].as_array().unwrap().len(), 2);
    let (_, rest) = send(&app, get("/records?metric=operating_margin&limit=2&offset=2")).await;
    assert_eq!(rest["records"].as_array().unwrap().len(), 1);
    let (_, y) = send(&app, get("/records?year=2025")).await;
    assert!(y["records"].as_array().unwrap().iter().all(|r| r["period"]["year"] == 2025));
    let (_, g) = send(&app, get("/records?status=Guidance")).await;
    assert_eq!(g["total"], 1);
    for bad in ["/records?year=abc", "/records?limit=0", "/records?status=Maybe"] {
        let (status, err) = send(&app, get(bad)).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{bad}");
        assert_conforms("error", &err);
    }
}

#[tokio::test]
async fn unknown_route_is_json_404() {
    let (status, err) = send(&app(), get("/nope")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_conforms("error", &err);
}

#[tokio::test]
async fn bearer_token_guards_all_but_health() {
    let app = router(state().with_bearer_token(Some("s3cret".into())));
    assert_eq!(send(&app, get("/health")).await.0, StatusCode::OK);
    let (status, err) = send(&app, get("/schema")).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    assert_conforms("error", &err);
    let ok = Request::get("/schema").header(header::AUTHORIZATION, "Bearer s3cret").body(Body::empty()).unwrap();
    assert_eq!(send(&app, ok).await.0, StatusCode::OK);
    let wrong = Request::get("/schema").header(header::AUTHORIZATION, "Bearer nope").body(Body::empty()).unwrap();
    assert_eq!(send(&app, wrong).await.0, StatusCode::UNAUTHORIZED);
}

#[tokio::test]
async fn concurrent_queries() {
    let app = app();
    let mut tasks = Vec::new();
    for i in 0..16 {
        let app = app.clone();
        let q = if i % 2 == 0 { "Q4 2024 operating margin" } else { "FY 2025 operating margin guidance" };
        tasks.push(tokio::spawn(async move { send(&app, post_query(format!(r#"{{"question":"{q}"}}"#))).await }));
    }
    let mut ids = std::collections::BTreeSet::new();
    for t in tasks {
        let (status, body) = t.await.unwrap();
        assert_eq!(status, StatusCode::OK);
        ids.insert(body["audit_id"].as_str().unwrap().to_string());
    }
    assert_eq!(ids.len(), 16);
}
