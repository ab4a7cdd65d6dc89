use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use colorgpt::bench::{completion_exemplars, ingest_completion_corpus, AppConfig};
use colorgpt::llm::{MockFallback, ProviderKind};
use colorgpt::{Document, ExemplarIndex, HashedTrigramEmbedder};
use colorgpt_service::{router, CompleteResponse, ErrorBody, GenerateResponse, Health, ServiceState};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

const GRAYS: [&str; 5] = ["#000000", "#404040", "#808080", "#c0c0c0", "#ffffff"];

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .canonicalize()
        .unwrap()
}

fn config() -> AppConfig {
    let mut cfg = AppConfig::load(fixtures().join("configs/fixed.toml")).unwrap();
    cfg.llm.mock_fallback = MockFallback::Fill(GRAYS.iter().map(|s| s.to_string()).collect());
    cfg.generation.pat = Some(fixtures().join("pat/pat.csv"));
    cfg
}

fn app(cfg: &AppConfig) -> axum::Router {
    let state = ServiceState::from_config(cfg).unwrap();
    router(Arc::new(state), &cfg.service)
}

fn masked_document(masks: usize) -> Value {
    let corpus = std::fs::read_to_string(fixtures().join("completion/corpus.jsonl")).unwrap();
    let mut doc: Value = serde_json::from_str(corpus.lines().nth(20).unwrap()).unwrap();
    let mut left = masks;
    for el in doc["elements"].as_array_mut().unwrap() {
        for c in el["color_palette"].as_array_mut().unwrap() {
            if left > 0 {
                *c = json!("[MASK]");
                left -= 1;
            }
        }
    }
    doc
}

async fn call(app: axum::Router, method: &str, uri: &str, body: Value) -> (StatusCode, Value) {
    let body = if body.is_null() {
        Body::empty()
    } else {
        Body::from(body.to_string())
    };
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body)
        .unwrap();
    let res = app.oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

#[tokio::test]
async fn complete_fills_masks_deterministically() {
    let app = app(&config());
    let body = json!({ "document": masked_document(2) });
    let (status, first) = call(app.clone(), "POST", "/v1/complete", body.clone()).await;
    assert_eq!(status, StatusCode::OK, "{first}");
    let (_, second) = call(app, "POST", "/v1/complete", body).await;
    let a: CompleteResponse = serde_json::from_value(first).unwrap();
    let b: CompleteResponse = serde_json::from_value(second).unwrap();
    assert_eq!(a.colors, vec!["#000000", "#404040"]);
    assert_eq!(a.colors, b.colors);
    assert_eq!(a.exemplar_id, b.exemplar_id);
    assert!(a.exemplar_id.is_some());
    assert_eq!(a.timing.attempts, 1);

    let updated = Document::from_value(&a.updated_document).unwrap();
    assert!(updated.masked_slots().is_empty());
    assert_eq!(a.updated_document["elements"][0]["color_palette"][0], "#000000");
}

#[tokio::test]
async fn document_without_masks_is_rejected() {
    let (status, body) = call(
        app(&config()),
        "POST",
        "/v1/complete",
        json!({ "document": masked_document(0) }),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let err: ErrorBody = serde_json::from_value(body).unwrap();
    assert_eq!(err.kind, "invalid_request");
}

#[tokio::test]
async fn malformed_bodies_are_rejected() {
    let app = app(&config());
    for body in [json!({ "document": { "id": 3 } }), json!({ "doc": {} }), json!([1, 2])] {
        let (status, _) = call(app.clone(), "POST", "/v1/complete", body).await;
        assert_eq!(status, StatusCode::BAD_REQUEST);
    }
    let bad = json!({ "document": masked_document(1), "overrides": { "representation": "cmyk" } });
    assert_eq!(
        call(app.clone(), "POST", "/v1/complete", bad).await.0,
        StatusCode::BAD_REQUEST
    );
    let task = json!({ "document": masked_document(1), "overrides": { "task": "generation" } });
    assert_eq!(call(app, "POST", "/v1/complete", task).await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn overrides_change_the_prompt() {
    let body = json!({
        "document": masked_document(1),
        "overrides": { "exemplar_policy": "none", "exemplar_count": 0 }
    });
    let (status, res) = call(app(&config()), "POST", "/v1/complete", body).await;
    assert_eq!(status, StatusCode::OK, "{res}");
    let res: CompleteResponse = serde_json::from_value(res).unwrap();
    assert_eq!(res.exemplar_id, None);
    assert_eq!(res.colors.len(), 1);
}

#[tokio::test]
async fn generate_returns_five_hex_colors() {
    let (status, res) = call(app(&config()), "POST", "/v1/generate", json!({ "text": "green grass" })).await;
    assert_eq!(status, StatusCode::OK, "{res}");
    let res: GenerateResponse = serde_json::from_value(res).unwrap();
    assert_eq!(res.palette, GRAYS);
    assert!(res.exemplar_id.is_some_and(|id| id.starts_with("pat-")));
}

#[tokio::test]
async fn empty_text_is_rejected() {
    let (status, _) = call(app(&config()), "POST", "/v1/generate", json!({ "text": "  " })).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn unusable_reply_is_422() {
    let mut cfg = config();
    cfg.llm.mock_fallback = MockFallback::Fill(vec!["#123456".into()]);
    let (status, body) = call(app(&cfg), "POST", "/v1/generate", json!({ "text": "green grass" })).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["kind"], "unusable_reply");
}

fn unreachable_provider() -> AppConfig {
    let mut cfg = config();
    cfg.llm.provider = ProviderKind::RemoteChat;
    cfg.llm.endpoint = "http://127.0.0.1:1/v1/chat/completions".into();
    cfg.llm.timeout_secs = 1;
    cfg.llm.retry.max_attempts = 1;
    cfg
}

#[tokio::test]
async fn provider_failure_is_502() {
    let (status, body) = call(
        app(&unreachable_provider()),
        "POST",
        "/v1/generate",
        json!({ "text": "sea glass" }),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_GATEWAY, "{body}");
    assert_eq!(body["kind"], "provider_failure");
}

#[tokio::test]
async fn health_reports_index_and_dictionary() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = unreachable_provider();
    let data = ingest_completion_corpus(
        &fixtures().join("completion/corpus.jsonl"),
        &fixtures().join("completion/splits.json"),
    )
    .unwrap();
    let index = ExemplarIndex::build(completion_exemplars(&data.train[..3]), &HashedTrigramEmbedder::new()).unwrap();
    let path = dir.path().join("completion.idx");
    index.save(&path).unwrap();
    cfg.service.completion_index = Some(path);

    let (status, body) = call(app(&cfg), "GET", "/v1/health", Value::Null).await;
    assert_eq!(status, StatusCode::OK);
    let health: Health = serde_json::from_value(body).unwrap();
    assert_eq!(health.status, "ok");
    assert_eq!(health.model, "fixed-mock");
    assert_eq!(health.index_size, 3);
    assert_eq!(health.generation_index_size, 20);
    assert_eq!(health.dict_size, 949);
}

#[tokio::test]
async fn cors_preflight_is_answered() {
    let req = Request::builder()
        .method("OPTIONS")
        .uri("/v1/complete")
        .header("origin", "http://localhost:5173")
        .header("access-control-request-method", "POST")
        .body(Body::empty())
        .unwrap();
    let res = app(&config()).oneshot(req).await.unwrap();
    assert!(res.status().is_success());
    assert_eq!(res.headers()["access-control-allow-origin"], "*");
}

#[tokio::test]
async fn oversized_body_is_413() {
    let mut cfg = config();
    cfg.service.body_limit_bytes = 64;
    let (status, _) = call(app(&cfg), "POST", "/v1/generate", json!({ "text": "x".repeat(200) })).await;
    assert_eq!(status, StatusCode::PAYLOAD_TOO_LARGE);
}
