//! Single-call judge baselines: the sectioned-output annotator
//! (GEMBA-MQM) and the error-count-then-score prompt (EAPrompt).
//! Both share the core scoring rules so score distributions are
//! directly comparable with the debate pipeline.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec;
use crate::gateway::{ChatMessage, Gateway, GatewayError};
use crate::mqm::{
    mqm_score, raw_weighted_score, AnnotationSet, Provenance, ScoreWeights, TranslationUnit,
};
use crate::prompts::{PromptError, Registry};
use crate::stage1::segment_bindings;
use crate::transcript::{CallRecord, CallStats, Recorder, StageTag};

const REPAIR_FORMAT_PROMPT: &str =
    "Your previous reply could not be parsed. Re-emit your answer in the required output format only.";

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineMethod {
    Gemba,
    Eaprompt,
}

impl BaselineMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            BaselineMethod::Gemba => "gemba",
            BaselineMethod::Eaprompt => "eaprompt",
        }
    }

    pub fn provenance(self) -> Provenance {
        match self {
            BaselineMethod::Gemba => Provenance::Gemba,
            BaselineMethod::Eaprompt => Provenance::Eaprompt,
        }
    }
}

impl std::str::FromStr for BaselineMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gemba" => Ok(BaselineMethod::Gemba),
            "eaprompt" => Ok(BaselineMethod::Eaprompt),
            other => Err(format!("unknown baseline method {other:?}")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BaselineOptions {
    pub model_id: String,
    pub temperature: f64,
}

impl Default for BaselineOptions {
    fn default() -> Self {
        Self { model_id: "gpt-4o-mini".into(), temperature: 0.0 }
    }
}

#[derive(Debug)]
pub struct BaselineOutcome {
    pub set: AnnotationSet,
    pub score: f64,
    /// Output was unusable even after one repair.
    pub error_flag: bool,
    /// Disagreements between the reported score and the error lists.
    pub anomalies: Vec<String>,
    pub warnings: Vec<String>,
    pub calls: Vec<CallRecord>,
    pub stats: CallStats,
}

/// One call with the sectioned-format prompt and its three shipped
/// examples; critical folds into major and the floor bounds blowups.
pub async fn gemba_mqm_evaluate(
    registry: &Registry,
    gateway: &Gateway,
    unit: &TranslationUnit,
    options: &BaselineOptions,
    weights: &ScoreWeights,
) -> Result<BaselineOutcome, BaselineError> {
    let template = registry.template("gemba")?;
    let bindings = segment_bindings(registry, unit)?;
    let messages = registry.render(template, &bindings, Some(registry.gemba_examples()))?;

    let mut recorder = Recorder::new(&options.model_id, options.temperature);
    let mut warnings = Vec::new();
    let content = recorder
        .call(gateway, StageTag::Baseline, None, None, "gemba".to_string(), messages.clone())
        .await?;

    let parsed = match codec::parse_gemba_sections(&content) {
        Ok(parsed) => Some(parsed),
        Err(_) => {
            let mut repair = messages;
            repair.push(ChatMessage::assistant(content));
            repair.push(ChatMessage::user(REPAIR_FORMAT_PROMPT));
            recorder.stats.repairs += 1;
            let retried = recorder
                .call(
                    gateway,
                    StageTag::Baseline,
                    None,
                    None,
                    "gemba/repair".to_string(),
                    repair,
                )
                .await?;
            codec::parse_gemba_sections(&retried).ok()
        }
    };

    let (set, score, error_flag) = match parsed {
        Some(p) => {
            warnings.extend(p.warnings);
            let score = mqm_score(&p.set, weights);
            (p.set, score, false)
        }
        None => {
            warnings.push("gemba: unparseable after repair; scored 0".to_string());
            (AnnotationSet::empty(Provenance::Gemba), 0.0, true)
        }
    };

    Ok(BaselineOutcome {
        set,
        score,
        error_flag,
        anomalies: Vec::new(),
        warnings,
        calls: recorder.records,
        stats: recorder.stats,
    })
}

/// One call with the worked-example score prompt. The reported
/// `<score>` tag is authoritative; the parsed Major/Minor lists are
/// the fallback, and disagreements between the two are logged as
/// anomalies rather than silently resolved.
pub async fn eaprompt_evaluate(
    registry: &Registry,
    gateway: &Gateway,
    unit: &TranslationUnit,
    options: &BaselineOptions,
    weights: &ScoreWeights,
) -> Result<BaselineOutcome, BaselineError> {
    let template = registry.template("eaprompt")?;
    let bindings = segment_bindings(registry, unit)?;
    let messages = registry.render(template, &bindings, None)?;

    let mut recorder = Recorder::new(&options.model_id, options.temperature);
    let mut warnings = Vec::new();
    let mut anomalies = Vec::new();

    let mut content = recorder
        .call(gateway, StageTag::Baseline, None, None, "eaprompt".to_string(), messages.clone())
        .await?;

    let mut tag = codec::extract_score_tag(&content).ok();
    let mut lists = codec::parse_eaprompt_lists(&content).ok();
    if tag.is_none() && lists.is_none() {
        let mut repair = messages;
        repair.push(ChatMessage::assistant(content));
        repair.push(ChatMessage::user(REPAIR_FORMAT_PROMPT));
        recorder.stats.repairs += 1;
        content = recorder
            .call(
                gateway,
                StageTag::Baseline,
                None,
                None,
                "eaprompt/repair".to_string(),
                repair,
            )
            .await?;
        tag = codec::extract_score_tag(&content).ok();
        lists = codec::parse_eaprompt_lists(&content).ok();
    }

    let set = match &lists {
        Some(parsed) => {
            warnings.extend(parsed.warnings.clone());
            parsed.set.clone()
        }
        None => AnnotationSet::empty(Provenance::Eaprompt),
    };

    let (score, error_flag) = match (tag, &lists) {
        (Some(tag), Some(_)) => {
            let recomputed = raw_weighted_score(&set, weights);
            if recomputed != tag as f64 {
                anomalies.push(format!(
                    "eaprompt: reported score {tag} disagrees with error lists ({recomputed})"
                ));
            }
            (tag as f64, false)
        }
        (Some(tag), None) => {
            warnings.push("eaprompt: score tag present but error lists unparseable".to_string());
            (tag as f64, false)
        }
        (None, Some(_)) => {
            anomalies.push(format!(
                "eaprompt: score tag missing; recomputed {} from error lists",
                mqm_score(&set, weights)
            ));
            (mqm_score(&set, weights), false)
        }
        (None, None) => {
            warnings.push("eaprompt: neither tag nor lists after repair; scored 0".to_string());
            (0.0, true)
        }
    };

    Ok(BaselineOutcome {
        set,
        score,
        error_flag,
        anomalies,
        warnings,
        calls: recorder.records,
        stats: recorder.stats,
    })
}
