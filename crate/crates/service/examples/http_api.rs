//! Build the HTTP router over a small store and call each endpoint in-process.

use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Request};
use finkpi::extraction::{MetricTaxonomy, MockBackend};
use finkpi::fixtures;
use finkpi::pipeline::{Pipeline, ReviewLog};
use finkpi::store::{KpiStore, SCHEMA_VERSION};
use finkpi::text_to_sql::TextToSql;
use finkpi_service::{router, AppState};
use http_body_util::BodyExt;
use tower::ServiceExt;

#[tokio::main]
async fn main() {
    let store = KpiStore::in_memory(SCHEMA_VERSION);
    Pipeline::mock().ingest_document(&fixtures::guidance_release(), &store, &ReviewLog::in_memory()).unwrap();
    let agent = TextToSql::new(MetricTaxonomy::default(), Arc::new(MockBackend::new(0)));
    let app = router(AppState::new(store, agent));

    let requests = [
        Request::get("/health").body(Body::empty()).unwrap(),
        Request::get("/records?metric=operating_margin&limit=1").body(Body::empty()).unwrap(),
        Request::post("/query")
            .header(header::CONTENT_TYPE, "application/json")
            .body(Body::from(r#"{"question":"FY 2025 operating margin guidance"}"#))
            .unwrap(),
        Request::post("/query")
            .header(header::CONTENT_TYPE, "application/json")
            .body(Body::from(r#"{"question":"Q4 2024 headcount"}"#))
            .unwrap(),
    ];
    for req in requests {
        let line = format!("{} {}", req.method(), req.uri());
        let resp = app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let body = resp.into_body().collect().await.unwrap().to_bytes();
        let json: serde_json::Value = serde_json::from_slice(&body).unwrap();
        println!("{line} -> {status}\n{}\n", serde_json::to_string_pretty(&json).unwrap());
    }
}
