//! HTTP service exposing the evaluation pipeline over JSON: gateway
//! sessions (remote/mock/replay with a shared cache and in-flight
//! limit), per-unit pipeline and baseline evaluation, and the
//! stateless statistics endpoints.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use uuid::Uuid;

use mmad_core::gateway::{Gateway, GatewayError};
use mmad_core::meta;
use mmad_core::mqm::{mqm_score, AnnotationSet, Provenance};
use mmad_core::pipeline::{self, PipelineError};
use mmad_core::prompts::Registry;
use mmad_core::proto::*;
use mmad_core::stage1::Stage1Error;

#[derive(Clone)]
struct Session {
    gateway: Arc<Gateway>,
    registry: Arc<Registry>,
}

#[derive(Clone, Default)]
pub struct AppState {
    sessions: Arc<Mutex<HashMap<String, Session>>>,
}

impl AppState {
    fn insert(&self, gateway: Gateway, registry: Registry) -> String {
        let id = Uuid::new_v4().to_string();
        let session = Session { gateway: Arc::new(gateway), registry: Arc::new(registry) };
        self.sessions.lock().unwrap().insert(id.clone(), session);
        id
    }

    fn get(&self, id: &str) -> Option<Session> {
        self.sessions.lock().unwrap().get(id).cloned()
    }

    fn remove(&self, id: &str) -> bool {
        self.sessions.lock().unwrap().remove(id).is_some()
    }
}

pub struct ApiError {
    status: StatusCode,
    kind: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, kind: &'static str, message: impl Into<String>) -> Self {
        Self { status, kind, message: message.into() }
    }

    fn not_found(what: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", what)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody { kind: self.kind.to_string(), error: self.message };
        (self.status, Json(body)).into_response()
    }
}

impl From<GatewayError> for ApiError {
    fn from(err: GatewayError) -> Self {
        let (status, kind) = match &err {
            GatewayError::Config(_) | GatewayError::MissingApiKey(_) => {
                (StatusCode::BAD_REQUEST, "bad_config")
            }
            GatewayError::CacheMiss { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "cache_miss"),
            GatewayError::ScriptExhausted { .. } => {
                (StatusCode::UNPROCESSABLE_ENTITY, "script_exhausted")
            }
            GatewayError::Http { .. }
            | GatewayError::RetriesExhausted { .. }
            | GatewayError::Transport(_)
            | GatewayError::BadResponse(_) => (StatusCode::BAD_GATEWAY, "upstream"),
            GatewayError::CacheIo { .. } | GatewayError::CacheCorrupt { .. } => {
                (StatusCode::INTERNAL_SERVER_ERROR, "cache_io")
            }
        };
        ApiError::new(status, kind, err.to_string())
    }
}

impl From<PipelineError> for ApiError {
    fn from(err: PipelineError) -> Self {
        match err {
            PipelineError::Stage1(Stage1Error::Gateway(e)) => e.into(),
            PipelineError::Debate(mmad_core::debate::DebateError::Gateway(e)) => e.into(),
            PipelineError::Judge(mmad_core::judge::JudgeError::Gateway(e)) => e.into(),
            PipelineError::Baseline(mmad_core::baselines::BaselineError::Gateway(e)) => e.into(),
            other => ApiError::new(StatusCode::BAD_REQUEST, "bad_request", other.to_string()),
        }
    }
}

pub fn router() -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}", delete(delete_session))
        .route("/v1/sessions/{id}/stats", get(session_stats))
        .route("/v1/sessions/{id}/chat", post(chat))
        .route("/v1/sessions/{id}/evaluate", post(evaluate))
        .route("/v1/sessions/{id}/baseline", post(baseline))
        .route("/v1/mqm/score", post(score))
        .route("/v1/meta-eval", post(meta_eval))
        .route("/v1/span-eval", post(span_eval))
        .route("/v1/report", post(report))
        .with_state(AppState::default())
}

/// Serve until the listener errors or the process exits.
pub async fn serve(listener: tokio::net::TcpListener) -> std::io::Result<()> {
    axum::serve(listener, router()).await
}

async fn health() -> &'static str {
    "ok"
}

async fn create_session(
    State(state): State<AppState>,
    Json(req): Json<CreateSessionRequest>,
) -> Result<Json<CreateSessionResponse>, ApiError> {
    let gateway = Gateway::new(req.backend, req.script)?;
    let mut registry = Registry::builtin().clone();
    for (i, raw) in req.packs.iter().enumerate() {
        let pack = mmad_core::prompts::parse_pack_str(&format!("packs[{i}]"), raw)
            .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_pack", e.to_string()))?;
        registry = registry.with_pack(pack);
    }
    let session_id = state.insert(gateway, registry);
    tracing::info!(%session_id, "session created");
    Ok(Json(CreateSessionResponse { session_id }))
}

async fn delete_session(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<StatusCode, ApiError> {
    if state.remove(&id) {
        Ok(StatusCode::NO_CONTENT)
    } else {
        Err(ApiError::not_found(format!("session {id}")))
    }
}

async fn session_stats(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<SessionStatsResponse>, ApiError> {
    let session = state.get(&id).ok_or_else(|| ApiError::not_found(format!("session {id}")))?;
    Ok(Json(SessionStatsResponse { session_id: id, stats: session.gateway.stats() }))
}

async fn chat(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<ChatProxyRequest>,
) -> Result<Json<ChatProxyResponse>, ApiError> {
    let session = state.get(&id).ok_or_else(|| ApiError::not_found(format!("session {id}")))?;
    Ok(Json(session.gateway.complete(&req.request).await?))
}

async fn evaluate(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<EvaluateRequest>,
) -> Result<Json<EvaluateResponse>, ApiError> {
    let session = state.get(&id).ok_or_else(|| ApiError::not_found(format!("session {id}")))?;
    let result =
        pipeline::evaluate_unit(&session.registry, &session.gateway, &req.unit, &req.options)
            .await?;
    Ok(Json(result))
}

async fn baseline(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<BaselineRequest>,
) -> Result<Json<EvaluateResponse>, ApiError> {
    let session = state.get(&id).ok_or_else(|| ApiError::not_found(format!("session {id}")))?;
    let result = pipeline::baseline_unit(
        &session.registry,
        &session.gateway,
        &req.unit,
        req.method,
        &req.options,
    )
    .await?;
    Ok(Json(result))
}

async fn score(Json(req): Json<ScoreRequest>) -> Result<Json<ScoreResponse>, ApiError> {
    let set = AnnotationSet {
        unit_key: None,
        annotations: req.annotations,
        provenance: Provenance::Judge,
    };
    Ok(Json(ScoreResponse { score: mqm_score(&set, &req.weights) }))
}

async fn meta_eval(Json(req): Json<MetaEvalRequest>) -> Result<Json<MetaEvalResponse>, ApiError> {
    if req.segments.is_empty() {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "empty_input", "no scored segments"));
    }
    let mut reports = Vec::new();
    for (lp, group) in meta::group_by_language_pair(&req.segments) {
        reports.push(meta::build_meta_report(&lp, &group, req.epsilon));
    }
    if req.pool {
        let pooled = meta::pooled_segments(&req.segments);
        reports.push(meta::build_meta_report("pooled", &pooled, req.epsilon));
    }
    Ok(Json(MetaEvalResponse { reports }))
}

async fn span_eval(Json(req): Json<SpanEvalRequest>) -> Result<Json<SpanEvalResponse>, ApiError> {
    let mut matches = 0usize;
    let mut predicted = 0usize;
    let mut gold = 0usize;
    let pairs = req.pairs.len();
    for pair in req.pairs {
        let pred_set = AnnotationSet {
            unit_key: None,
            annotations: pair.predicted,
            provenance: Provenance::Judge,
        };
        let gold_set = AnnotationSet {
            unit_key: None,
            annotations: pair.gold,
            provenance: Provenance::Gold,
        };
        let prf = meta::span_prf(&pred_set, &gold_set);
        matches += prf.matches;
        predicted += prf.predicted;
        gold += prf.gold;
    }
    Ok(Json(SpanEvalResponse {
        micro: meta::Prf::from_counts(matches, predicted, gold),
        pairs,
    }))
}

async fn report(Json(req): Json<ReportRequest>) -> Result<Json<ReportResponse>, ApiError> {
    let distribution = meta::score_distribution(&req.scores)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_scores", e.to_string()))?;
    Ok(Json(ReportResponse { distribution }))
}
