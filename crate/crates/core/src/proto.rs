//! Request/response bodies for the HTTP service. Shared by the
//! server and the client crate so the wire contract lives in one
//! place.

use serde::{Deserialize, Serialize};

use crate::baselines::BaselineMethod;
use crate::gateway::{BackendConfig, ChatRequest, ChatResponse, GatewayStats, ScriptEntry};
use crate::meta::{BucketDistribution, MetaReport, Prf, ScoredSegment};
use crate::mqm::{ErrorAnnotation, ScoreWeights, TranslationUnit};
use crate::pipeline::{RunOptions, UnitEvaluation};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateSessionRequest {
    pub backend: BackendConfig,
    /// Mock script entries, consumed across the whole session.
    #[serde(default)]
    pub script: Vec<ScriptEntry>,
    /// Raw JSON pack files registering few-shot examples for
    /// language pairs the built-in registry does not ship.
    #[serde(default)]
    pub packs: Vec<String>,
}

impl CreateSessionRequest {
    pub fn new(backend: BackendConfig) -> Self {
        Self { backend, script: Vec::new(), packs: Vec::new() }
    }

    pub fn with_script(mut self, script: Vec<ScriptEntry>) -> Self {
        self.script = script;
        self
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateSessionResponse {
    pub session_id: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionStatsResponse {
    pub session_id: String,
    pub stats: GatewayStats,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluateRequest {
    pub unit: TranslationUnit,
    #[serde(default)]
    pub options: RunOptions,
}

pub type EvaluateResponse = UnitEvaluation;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaselineRequest {
    pub unit: TranslationUnit,
    pub method: BaselineMethod,
    #[serde(default)]
    pub options: RunOptions,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatProxyRequest {
    pub request: ChatRequest,
}

pub type ChatProxyResponse = ChatResponse;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub annotations: Vec<ErrorAnnotation>,
    #[serde(default)]
    pub weights: ScoreWeights,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub score: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetaEvalRequest {
    pub segments: Vec<ScoredSegment>,
    /// Fixed tie threshold; omitted means calibrate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Also report a pooled view across language pairs.
    #[serde(default)]
    pub pool: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetaEvalResponse {
    pub reports: Vec<MetaReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpanEvalPair {
    pub predicted: Vec<ErrorAnnotation>,
    pub gold: Vec<ErrorAnnotation>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpanEvalRequest {
    pub pairs: Vec<SpanEvalPair>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpanEvalResponse {
    /// Corpus micro-average: matches and counts pooled over pairs.
    pub micro: Prf,
    pub pairs: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportRequest {
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportResponse {
    pub distribution: BucketDistribution,
}

/// Uniform error body for non-2xx responses.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorBody {
    pub kind: String,
    pub error: String,
}
