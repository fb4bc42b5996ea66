//! Thin typed client for the pipeline service. Every method mirrors
//! one endpoint; request/response bodies come from `mmad_core::proto`.

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use mmad_core::baselines::BaselineMethod;
use mmad_core::gateway::{ChatRequest, GatewayStats};
use mmad_core::mqm::{ErrorAnnotation, ScoreWeights, TranslationUnit};
use mmad_core::pipeline::{RunOptions, UnitEvaluation};
use mmad_core::proto::*;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("transport: {0}")]
    Transport(#[from] reqwest::Error),
    #[error("server returned {status} ({kind}): {message}")]
    Api { status: u16, kind: String, message: String },
}

#[derive(Clone)]
pub struct ApiClient {
    base: String,
    http: reqwest::Client,
}

impl ApiClient {
    pub fn new(base: impl Into<String>) -> Self {
        Self {
            base: base.into().trim_end_matches('/').to_string(),
            http: reqwest::Client::new(),
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    async fn decode<T: DeserializeOwned>(response: reqwest::Response) -> Result<T, ClientError> {
        let status = response.status();
        if status.is_success() {
            return Ok(response.json().await?);
        }
        let body: ErrorBody = response.json().await.unwrap_or(ErrorBody {
            kind: "unknown".to_string(),
            error: format!("HTTP {status}"),
        });
        Err(ClientError::Api { status: status.as_u16(), kind: body.kind, message: body.error })
    }

    async fn post<B: Serialize, T: DeserializeOwned>(
        &self,
        path: &str,
        body: &B,
    ) -> Result<T, ClientError> {
        let response = self.http.post(self.url(path)).json(body).send().await?;
        Self::decode(response).await
    }

    pub async fn health(&self) -> Result<(), ClientError> {
        let response = self.http.get(self.url("/health")).send().await?;
        if response.status().is_success() {
            Ok(())
        } else {
            Err(ClientError::Api {
                status: response.status().as_u16(),
                kind: "health".to_string(),
                message: "health check failed".to_string(),
            })
        }
    }

    pub async fn create_session(&self, req: &CreateSessionRequest) -> Result<String, ClientError> {
        let response: CreateSessionResponse = self.post("/v1/sessions", req).await?;
        Ok(response.session_id)
    }

    pub async fn delete_session(&self, session_id: &str) -> Result<(), ClientError> {
        let response = self
            .http
            .delete(self.url(&format!("/v1/sessions/{session_id}")))
            .send()
            .await?;
        if response.status().is_success() {
            Ok(())
        } else {
            Self::decode::<serde_json::Value>(response).await.map(|_| ())
        }
    }

    pub async fn session_stats(&self, session_id: &str) -> Result<GatewayStats, ClientError> {
        let response = self
            .http
            .get(self.url(&format!("/v1/sessions/{session_id}/stats")))
            .send()
            .await?;
        let stats: SessionStatsResponse = Self::decode(response).await?;
        Ok(stats.stats)
    }

    pub async fn chat(
        &self,
        session_id: &str,
        request: ChatRequest,
    ) -> Result<ChatProxyResponse, ClientError> {
        self.post(
            &format!("/v1/sessions/{session_id}/chat"),
            &ChatProxyRequest { request },
        )
        .await
    }

    pub async fn evaluate(
        &self,
        session_id: &str,
        unit: TranslationUnit,
        options: RunOptions,
    ) -> Result<UnitEvaluation, ClientError> {
        self.post(
            &format!("/v1/sessions/{session_id}/evaluate"),
            &EvaluateRequest { unit, options },
        )
        .await
    }

    pub async fn baseline(
        &self,
        session_id: &str,
        unit: TranslationUnit,
        method: BaselineMethod,
        options: RunOptions,
    ) -> Result<UnitEvaluation, ClientError> {
        self.post(
            &format!("/v1/sessions/{session_id}/baseline"),
            &BaselineRequest { unit, method, options },
        )
        .await
    }

    pub async fn score(
        &self,
        annotations: Vec<ErrorAnnotation>,
        weights: ScoreWeights,
    ) -> Result<f64, ClientError> {
        let response: ScoreResponse =
            self.post("/v1/mqm/score", &ScoreRequest { annotations, weights }).await?;
        Ok(response.score)
    }

    pub async fn meta_eval(&self, req: &MetaEvalRequest) -> Result<MetaEvalResponse, ClientError> {
        self.post("/v1/meta-eval", req).await
    }

    pub async fn span_eval(&self, req: &SpanEvalRequest) -> Result<SpanEvalResponse, ClientError> {
        self.post("/v1/span-eval", req).await
    }

    pub async fn report(&self, scores: Vec<f64>) -> Result<ReportResponse, ClientError> {
        self.post("/v1/report", &ReportRequest { scores }).await
    }
}
