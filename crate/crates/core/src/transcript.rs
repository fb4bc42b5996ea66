//! Per-call transcript records. Every gateway call made by the
//! pipeline is recorded with its tag, digest, messages, and response
//! so a run can be audited and replayed.

use serde::{Deserialize, Serialize};

use crate::gateway::{ChatMessage, ChatRequest, Gateway, GatewayError, ServedBy};
use crate::mqm::Dimension;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageTag {
    Stage1,
    Debate,
    Judge,
    Baseline,
}

impl StageTag {
    pub fn as_str(self) -> &'static str {
        match self {
            StageTag::Stage1 => "stage1",
            StageTag::Debate => "debate",
            StageTag::Judge => "judge",
            StageTag::Baseline => "baseline",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub tag: String,
    pub stage: StageTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimension: Option<Dimension>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub round: Option<u32>,
    pub request_digest: String,
    pub messages: Vec<ChatMessage>,
    pub response_content: String,
}

/// Per-call backend tallies for one unit of work.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallStats {
    pub calls: u32,
    pub remote: u32,
    pub mock: u32,
    pub cache_hits: u32,
    pub repairs: u32,
}

impl CallStats {
    pub fn absorb(&mut self, other: &CallStats) {
        self.calls += other.calls;
        self.remote += other.remote;
        self.mock += other.mock;
        self.cache_hits += other.cache_hits;
        self.repairs += other.repairs;
    }
}

/// Accumulates call records while driving a gateway. Calls within one
/// unit are sequential, so this is plain mutable state.
pub struct Recorder {
    pub records: Vec<CallRecord>,
    pub stats: CallStats,
    pub model_id: String,
    pub temperature: f64,
}

impl Recorder {
    pub fn new(model_id: impl Into<String>, temperature: f64) -> Self {
        Self {
            records: Vec::new(),
            stats: CallStats::default(),
            model_id: model_id.into(),
            temperature,
        }
    }

    /// Issue one chat call and record it.
    pub async fn call(
        &mut self,
        gateway: &Gateway,
        stage: StageTag,
        dimension: Option<Dimension>,
        round: Option<u32>,
        tag: String,
        messages: Vec<ChatMessage>,
    ) -> Result<String, GatewayError> {
        let mut request = ChatRequest::new(self.model_id.clone(), messages.clone());
        request.temperature = self.temperature;
        request.tag = tag.clone();
        let response = gateway.complete(&request).await?;
        self.stats.calls += 1;
        match response.backend {
            ServedBy::Remote => self.stats.remote += 1,
            ServedBy::Mock => self.stats.mock += 1,
            ServedBy::Cache => self.stats.cache_hits += 1,
        }
        self.records.push(CallRecord {
            tag,
            stage,
            dimension,
            round,
            request_digest: response.request_digest.clone(),
            messages,
            response_content: response.content.clone(),
        });
        Ok(response.content)
    }
}
