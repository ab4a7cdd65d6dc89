//! HTTP JSON API over the completion and generation pipelines.
//!
//! Colors travel as `"#rrggbb"` strings whatever representation the prompts
//! use internally.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::{HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use colorgpt::bench::{
    case_seed, completion_exemplars, generation_exemplars, ingest_completion_corpus, ingest_pat, load_or_build_index,
    AppConfig, BenchError, Harness, ServiceSettings,
};
use colorgpt::pipeline::{Pipeline, PipelineError};
use colorgpt::prompting::{PromptConfig, PromptError};
use colorgpt::{ColorCodec, Document, ExemplarIndex};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};
use tracing::info;

/// Read-only state shared by every request.
pub struct ServiceState {
    pub completion: Pipeline,
    pub generation: Pipeline,
    pub completion_prompt: PromptConfig,
    pub generation_prompt: PromptConfig,
    pub seed: u64,
}

impl ServiceState {
    /// Loads the dictionary, embedder, provider and both exemplar indexes.
    /// An index comes from `service.*_index` when that file exists, and is
    /// otherwise built from the training split of the configured dataset.
    pub fn from_config(cfg: &AppConfig) -> Result<Self, BenchError> {
        let harness = Harness::new(cfg.clone())?;
        let provider = harness.provider(None)?;
        let base = Pipeline {
            dict: harness.dict.clone(),
            embedder: harness.embedder.clone(),
            provider,
            templates: harness.templates.clone(),
            index: None,
        };
        let completion_index = completion_index(&harness)?;
        let generation_index = generation_index(&harness)?;
        Ok(ServiceState {
            completion: Pipeline {
                index: completion_index,
                ..base.clone()
            },
            generation: Pipeline {
                index: generation_index,
                ..base
            },
            completion_prompt: cfg.completion.prompt.clone(),
            generation_prompt: cfg.generation.prompt.clone(),
            seed: cfg.seed,
        })
    }
}

fn missing(path: &std::path::Path) -> BenchError {
    BenchError::Config(format!(
        "{} does not exist and no dataset is configured to build it",
        path.display()
    ))
}

fn completion_index(h: &Harness) -> Result<Option<Arc<ExemplarIndex>>, BenchError> {
    let path = h.config.service.completion_index.as_deref();
    if let Some(p) = path.filter(|p| p.exists()) {
        return Ok(Some(Arc::new(ExemplarIndex::load(p)?)));
    }
    let c = &h.config.completion;
    match (c.corpus.as_deref(), c.splits.as_deref()) {
        (Some(corpus), Some(splits)) => {
            let data = ingest_completion_corpus(corpus, splits)?;
            let index = load_or_build_index(path, || completion_exemplars(&data.train), &*h.embedder)?;
            Ok(Some(Arc::new(index)))
        }
        _ => path.map_or(Ok(None), |p| Err(missing(p))),
    }
}

fn generation_index(h: &Harness) -> Result<Option<Arc<ExemplarIndex>>, BenchError> {
    let path = h.config.service.generation_index.as_deref();
    if let Some(p) = path.filter(|p| p.exists()) {
        return Ok(Some(Arc::new(ExemplarIndex::load(p)?)));
    }
    match h.config.generation.pat.as_deref() {
        Some(pat) => {
            let data = ingest_pat(pat, h.config.generation.split_seed)?;
            let index = load_or_build_index(path, || generation_exemplars(&data.train), &*h.embedder)?;
            Ok(Some(Arc::new(index)))
        }
        None => path.map_or(Ok(None), |p| Err(missing(p))),
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub kind: String,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    kind: &'static str,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            kind: "invalid_request",
            message: message.into(),
        }
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        let (status, kind) = match &e {
            PipelineError::Prompt(PromptError::NoMaskedSlots | PromptError::EmptyText | PromptError::Document(_)) => {
                (StatusCode::BAD_REQUEST, "invalid_request")
            }
            PipelineError::Reply { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "unusable_reply"),
            PipelineError::Provider(p) if p.is_provider_failure() => (StatusCode::BAD_GATEWAY, "provider_failure"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        ApiError {
            status,
            kind,
            message: e.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: self.message,
            kind: self.kind.to_string(),
        };
        (self.status, Json(body)).into_response()
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Timing {
    pub elapsed_ms: u64,
    pub attempts: u32,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CompleteRequest {
    document: Value,
    #[serde(default)]
    overrides: Option<Value>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CompleteResponse {
    pub colors: Vec<String>,
    pub updated_document: Value,
    pub exemplar_id: Option<String>,
    pub timing: Timing,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GenerateRequest {
    text: String,
    #[serde(default)]
    overrides: Option<Value>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GenerateResponse {
    pub palette: Vec<String>,
    pub exemplar_id: Option<String>,
    pub timing: Timing,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub model: String,
    pub index_size: usize,
    pub generation_index_size: usize,
    pub dict_size: usize,
}

/// Applies per-request `overrides` (any `PromptConfig` field but `task`).
fn with_overrides(base: &PromptConfig, overrides: Option<Value>) -> Result<PromptConfig, ApiError> {
    let Some(overrides) = overrides else {
        return Ok(base.clone());
    };
    let Value::Object(fields) = overrides else {
        return Err(ApiError::bad_request("overrides must be an object"));
    };
    if fields.contains_key("task") {
        return Err(ApiError::bad_request("overrides cannot change the task"));
    }
    let mut merged = serde_json::to_value(base).expect("prompt config serializes");
    merged.as_object_mut().expect("object").extend(fields);
    let cfg: PromptConfig =
        serde_json::from_value(merged).map_err(|e| ApiError::bad_request(format!("overrides: {e}")))?;
    cfg.validate().map_err(|e| ApiError::bad_request(e.to_string()))?;
    Ok(cfg)
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("request body: {e}")))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError {
        status: StatusCode::INTERNAL_SERVER_ERROR,
        kind: "internal",
        message: e.to_string(),
    })
}

async fn complete(State(state): State<Arc<ServiceState>>, body: Bytes) -> Result<Json<CompleteResponse>, ApiError> {
    let req: CompleteRequest = parse_body(&body)?;
    let doc = Document::from_value(&req.document).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let positions = doc.masked_slots();
    if positions.is_empty() {
        return Err(ApiError::bad_request("document has no masked slots"));
    }
    let cfg = with_overrides(&state.completion_prompt, req.overrides)?;
    let seed = case_seed(state.seed, &doc.id, positions.len());
    let worker = state.clone();
    let (doc, suggestion) = blocking(move || {
        let s = worker.completion.complete(&doc, &cfg, seed, None);
        (doc, s)
    })
    .await?;
    let suggestion = suggestion?;
    let updated = doc
        .fill(&positions, &suggestion.result)
        .map_err(|e| ApiError::from(PipelineError::Prompt(e.into())))?;
    info!(document = %updated.id, masked = positions.len(), attempts = suggestion.attempts, "completed");
    Ok(Json(CompleteResponse {
        colors: suggestion.result.iter().map(|c| c.to_hex()).collect(),
        updated_document: updated
            .to_value(&ColorCodec::hex())
            .expect("hex encoding is infallible"),
        exemplar_id: suggestion.exemplar_ids.into_iter().next(),
        timing: Timing {
            elapsed_ms: suggestion.elapsed.as_millis() as u64,
            attempts: suggestion.attempts,
        },
    }))
}

async fn generate(State(state): State<Arc<ServiceState>>, body: Bytes) -> Result<Json<GenerateResponse>, ApiError> {
    let req: GenerateRequest = parse_body(&body)?;
    let text = req.text.trim().to_string();
    if text.is_empty() {
        return Err(ApiError::bad_request("text is empty"));
    }
    let cfg = with_overrides(&state.generation_prompt, req.overrides)?;
    let seed = case_seed(state.seed, &text, 0);
    let worker = state.clone();
    let suggestion = blocking(move || worker.generation.generate(&text, &cfg, seed, None)).await??;
    let palette = suggestion.result.colors().unwrap_or_default();
    info!(attempts = suggestion.attempts, "generated");
    Ok(Json(GenerateResponse {
        palette: palette.iter().map(|c| c.to_hex()).collect(),
        exemplar_id: suggestion.exemplar_ids.into_iter().next(),
        timing: Timing {
            elapsed_ms: suggestion.elapsed.as_millis() as u64,
            attempts: suggestion.attempts,
        },
    }))
}

async fn health(State(state): State<Arc<ServiceState>>) -> Json<Health> {
    let size = |p: &Pipeline| p.index.as_ref().map_or(0, |i| i.len());
    Json(Health {
        status: "ok".into(),
        model: state.completion.provider.model().to_string(),
        index_size: size(&state.completion),
        generation_index_size: size(&state.generation),
        dict_size: state.completion.dict.len(),
    })
}

pub fn router(state: Arc<ServiceState>, settings: &ServiceSettings) -> Router {
    let cors = if settings.cors_origins.is_empty() {
        CorsLayer::new().allow_origin(Any)
    } else {
        let origins: Vec<HeaderValue> = settings
            .cors_origins
            .iter()
            .filter_map(|o| HeaderValue::from_str(o).ok())
            .collect();
        CorsLayer::new().allow_origin(AllowOrigin::list(origins))
    }
    .allow_methods(Any)
    .allow_headers(Any);
    Router::new()
        .route("/v1/complete", post(complete))
        .route("/v1/generate", post(generate))
        .route("/v1/health", get(health))
        .layer(DefaultBodyLimit::max(settings.body_limit_bytes))
        .layer(cors)
        .with_state(state)
}

/// Serves until Ctrl-C.
pub async fn serve(state: Arc<ServiceState>, settings: &ServiceSettings) -> std::io::Result<()> {
    let addr: SocketAddr = format!("{}:{}", settings.bind, settings.port)
        .parse()
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidInput, format!("bind address: {e}")))?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    info!(%addr, "listening");
    axum::serve(listener, router(state, settings))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
