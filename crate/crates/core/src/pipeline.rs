//! Per-unit orchestration of the three-stage pipeline and the
//! single-call baselines. One unit's evaluation is sequential; units
//! are independent and safe to process concurrently.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{self, BaselineMethod, BaselineOptions};
use crate::debate::{self, DebateConfig, DebateOutcome, DebateTopic, Strategy, Viewpoint};
use crate::gateway::Gateway;
use crate::judge::{self, JudgeOptions};
use crate::mqm::{
    mqm_score, validate_annotation, AnnotationSet, Dimension, MqmError, Provenance, ScoreWeights,
    TranslationUnit, UnitKey,
};
use crate::prompts::Registry;
use crate::stage1::{self, DimensionSet, Stage1Options};
use crate::transcript::{CallRecord, CallStats};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Stage1(#[from] stage1::Stage1Error),
    #[error(transparent)]
    Debate(#[from] debate::DebateError),
    #[error(transparent)]
    Judge(#[from] judge::JudgeError),
    #[error(transparent)]
    Baseline(#[from] baselines::BaselineError),
    #[error(transparent)]
    Unit(#[from] MqmError),
}

fn default_model() -> String {
    "gpt-4o-mini".to_string()
}

fn default_shots() -> usize {
    4
}

fn default_max_rounds() -> u32 {
    3
}

fn default_true() -> bool {
    true
}

/// Resolved per-run settings shared by every unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    #[serde(default = "default_model")]
    pub model_id: String,
    #[serde(default = "default_strategy")]
    pub strategy: Strategy,
    #[serde(default = "default_topic")]
    pub topic: DebateTopic,
    #[serde(default = "default_max_rounds")]
    pub max_rounds: u32,
    #[serde(default)]
    pub dimensions: DimensionSet,
    #[serde(default = "default_shots")]
    pub shots: usize,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_true")]
    pub lean_minor: bool,
    #[serde(default)]
    pub weights: ScoreWeights,
    #[serde(default)]
    pub zero_shot_fallback: bool,
    #[serde(default)]
    pub span_overlap_collapse: bool,
}

fn default_strategy() -> Strategy {
    Strategy::Consensus
}

fn default_topic() -> DebateTopic {
    DebateTopic::Severity
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            model_id: default_model(),
            strategy: Strategy::Consensus,
            topic: DebateTopic::Severity,
            max_rounds: default_max_rounds(),
            dimensions: DimensionSet::all(),
            shots: default_shots(),
            temperature: 0.0,
            lean_minor: true,
            weights: ScoreWeights::default(),
            zero_shot_fallback: false,
            span_overlap_collapse: false,
        }
    }
}

impl RunOptions {
    pub fn stage1_options(&self) -> Stage1Options {
        Stage1Options {
            model_id: self.model_id.clone(),
            temperature: self.temperature,
            shots: self.shots,
            zero_shot_fallback: self.zero_shot_fallback,
        }
    }

    pub fn debate_config(&self) -> DebateConfig {
        DebateConfig {
            strategy: self.strategy,
            max_rounds: self.max_rounds,
            topic: self.topic,
            lean_minor: self.lean_minor,
            model_id: self.model_id.clone(),
            temperature: self.temperature,
        }
    }

    pub fn judge_options(&self) -> JudgeOptions {
        JudgeOptions {
            model_id: self.model_id.clone(),
            temperature: self.temperature,
            span_overlap_collapse: self.span_overlap_collapse,
        }
    }

    pub fn baseline_options(&self) -> BaselineOptions {
        BaselineOptions {
            model_id: self.model_id.clone(),
            temperature: self.temperature,
        }
    }
}

/// Everything produced for one unit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UnitEvaluation {
    pub unit_key: UnitKey,
    pub provenance: Provenance,
    pub annotations: AnnotationSet,
    pub score: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub stage1: BTreeMap<Dimension, AnnotationSet>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub debate_outcomes: BTreeMap<Dimension, DebateOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judge_analysis: Option<String>,
    pub calls: Vec<CallRecord>,
    pub stats: CallStats,
    pub warnings: Vec<String>,
    /// Soft failures that degraded a stage (parse failures after
    /// repair). The unit still produced a result.
    pub errors: Vec<String>,
    pub anomalies: Vec<String>,
}

/// Full three-stage evaluation of one unit. Transport failures
/// propagate; parse failures degrade per stage contract.
pub async fn evaluate_unit(
    registry: &Registry,
    gateway: &Gateway,
    unit: &TranslationUnit,
    options: &RunOptions,
) -> Result<UnitEvaluation, PipelineError> {
    unit.validate()?;
    let mut calls = Vec::new();
    let mut stats = CallStats::default();
    let mut warnings = Vec::new();
    let mut errors = Vec::new();

    let mut stage1_map = stage1::evaluate_all_dimensions(
        registry,
        gateway,
        unit,
        &options.dimensions,
        &options.stage1_options(),
    )
    .await?;

    // Transcripts follow true call order: the whole stage-1 pass,
    // then the debates, both in configured dimension order.
    let mut stage1_sets = BTreeMap::new();
    for dimension in options.dimensions.iter() {
        let outcome = stage1_map.remove(&dimension).expect("one outcome per dimension");
        warnings.extend(outcome.warnings);
        if outcome.parse_failed {
            errors.push(format!("stage1/{dimension}: parse failed after repair"));
        }
        calls.extend(outcome.calls);
        stats.absorb(&outcome.stats);
        stage1_sets.insert(dimension, outcome.set);
    }

    let mut viewpoints: BTreeMap<Dimension, Viewpoint> = BTreeMap::new();
    let mut debate_outcomes = BTreeMap::new();
    let debate_cfg = options.debate_config();
    for dimension in options.dimensions.iter() {
        let s0 = &stage1_sets[&dimension];
        let result =
            debate::run_strategy(registry, gateway, unit, dimension, s0, &debate_cfg).await?;
        warnings.extend(result.warnings);
        calls.extend(result.calls);
        stats.absorb(&result.stats);
        debate_outcomes.insert(dimension, result.viewpoint.outcome);
        viewpoints.insert(dimension, result.viewpoint);
    }

    let (judged, score) = judge::judge_and_score(
        registry,
        gateway,
        unit,
        &viewpoints,
        &options.weights,
        &options.judge_options(),
    )
    .await?;
    warnings.extend(judged.warnings.clone());
    if judged.parse_failed {
        errors.push("judge: parse failed after repair".to_string());
    }
    calls.extend(judged.calls);
    stats.absorb(&judged.stats);

    let mut annotations = judged.set;
    annotations.unit_key = Some(unit.key());
    for ann in &annotations.annotations {
        warnings.extend(validate_annotation(ann, unit));
    }

    Ok(UnitEvaluation {
        unit_key: unit.key(),
        provenance: Provenance::Judge,
        annotations,
        score,
        stage1: stage1_sets,
        debate_outcomes,
        judge_analysis: judged.analysis,
        calls,
        stats,
        warnings,
        errors,
        anomalies: Vec::new(),
    })
}

/// Single-call baseline evaluation of one unit.
pub async fn baseline_unit(
    registry: &Registry,
    gateway: &Gateway,
    unit: &TranslationUnit,
    method: BaselineMethod,
    options: &RunOptions,
) -> Result<UnitEvaluation, PipelineError> {
    unit.validate()?;
    let outcome = match method {
        BaselineMethod::Gemba => {
            baselines::gemba_mqm_evaluate(
                registry,
                gateway,
                unit,
                &options.baseline_options(),
                &options.weights,
            )
            .await?
        }
        BaselineMethod::Eaprompt => {
            baselines::eaprompt_evaluate(
                registry,
                gateway,
                unit,
                &options.baseline_options(),
                &options.weights,
            )
            .await?
        }
    };

    let mut warnings = outcome.warnings;
    let mut annotations = outcome.set;
    annotations.unit_key = Some(unit.key());
    annotations.provenance = method.provenance();
    for ann in &annotations.annotations {
        warnings.extend(validate_annotation(ann, unit));
    }
    let errors = if outcome.error_flag {
        vec![format!("{}: parse failed after repair", method.as_str())]
    } else {
        Vec::new()
    };

    Ok(UnitEvaluation {
        unit_key: unit.key(),
        provenance: method.provenance(),
        annotations,
        score: outcome.score,
        stage1: BTreeMap::new(),
        debate_outcomes: BTreeMap::new(),
        judge_analysis: None,
        calls: outcome.calls,
        stats: outcome.stats,
        warnings,
        errors,
        anomalies: outcome.anomalies,
    })
}

/// Re-derive a unit's score from its final annotations (sanity hook
/// for tests and the replay path).
pub fn rescore(evaluation: &UnitEvaluation, weights: &ScoreWeights) -> f64 {
    mqm_score(&evaluation.annotations, weights)
}
