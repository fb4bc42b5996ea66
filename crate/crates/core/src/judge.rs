//! Stage 3: synthesize the per-dimension viewpoints into one
//! annotation set. The judge LLM's output is authoritative;
//! `normalize_final` is a deterministic safety net that guarantees
//! the deduplication rules even when the model ignores them.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::codec;
use crate::debate::Viewpoint;
use crate::gateway::{ChatMessage, Gateway, GatewayError};
use crate::mqm::{
    mqm_score, AnnotationSet, Dimension, ErrorAnnotation, Provenance, ScoreWeights, Span,
    TranslationUnit,
};
use crate::prompts::{PromptError, Registry};
use crate::stage1::{segment_bindings, REPAIR_PROMPT};
use crate::transcript::{CallRecord, CallStats, Recorder, StageTag};

#[derive(Debug, Error)]
pub enum JudgeError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

#[derive(Debug, Clone)]
pub struct JudgeOptions {
    pub model_id: String,
    pub temperature: f64,
    /// Collapse same-span groups by substring overlap instead of
    /// exact match. Off by default.
    pub span_overlap_collapse: bool,
}

impl Default for JudgeOptions {
    fn default() -> Self {
        Self {
            model_id: "gpt-4o-mini".into(),
            temperature: 0.0,
            span_overlap_collapse: false,
        }
    }
}

#[derive(Debug)]
pub struct JudgeOutcome {
    pub set: AnnotationSet,
    /// The judge's free-text analysis, persisted verbatim.
    pub analysis: Option<String>,
    /// Judge output was unusable even after one repair; the result is
    /// the normalized concatenation of the viewpoints.
    pub parse_failed: bool,
    pub warnings: Vec<String>,
    pub calls: Vec<CallRecord>,
    pub stats: CallStats,
}

fn viewpoint_payload(viewpoints: &BTreeMap<Dimension, Viewpoint>, dim: Dimension) -> String {
    match viewpoints.get(&dim) {
        Some(v) => codec::encode_annotations(&v.annotations),
        None => r#"{"annotations": []}"#.to_string(),
    }
}

/// One judge call over the four viewpoint payloads, then
/// `normalize_final`. Judge parse failure after one repair turn falls
/// back to normalizing the concatenated viewpoints.
pub async fn synthesize(
    registry: &Registry,
    gateway: &Gateway,
    unit: &TranslationUnit,
    viewpoints: &BTreeMap<Dimension, Viewpoint>,
    options: &JudgeOptions,
) -> Result<JudgeOutcome, JudgeError> {
    let template = registry.template("stage3_judge")?;
    let mut bindings = segment_bindings(registry, unit)?;
    bindings.insert(
        "accuracy_annotations".to_string(),
        viewpoint_payload(viewpoints, Dimension::Accuracy),
    );
    bindings.insert(
        "fluency_annotations".to_string(),
        viewpoint_payload(viewpoints, Dimension::Fluency),
    );
    bindings.insert(
        "term_annotations".to_string(),
        viewpoint_payload(viewpoints, Dimension::Terminology),
    );
    bindings.insert(
        "style_annotations".to_string(),
        viewpoint_payload(viewpoints, Dimension::Style),
    );

    let messages = registry.render(template, &bindings, None)?;
    let mut recorder = Recorder::new(&options.model_id, options.temperature);
    let mut warnings = Vec::new();
    let content = recorder
        .call(gateway, StageTag::Judge, None, None, "judge".to_string(), messages.clone())
        .await?;

    let parsed = match codec::extract_annotations(&content) {
        Ok(parsed) => Some(parsed),
        Err(_) => {
            let mut repair = messages;
            repair.push(ChatMessage::assistant(content));
            repair.push(ChatMessage::user(REPAIR_PROMPT));
            recorder.stats.repairs += 1;
            let retried = recorder
                .call(gateway, StageTag::Judge, None, None, "judge/repair".to_string(), repair)
                .await?;
            codec::extract_annotations(&retried).ok()
        }
    };

    let (raw, analysis, parse_failed) = match parsed {
        Some(p) => {
            warnings.extend(p.warnings);
            (p.set.annotations, p.analysis, false)
        }
        None => {
            warnings.push(
                "judge: unparseable after repair; normalizing concatenated viewpoints".to_string(),
            );
            let mut all = Vec::new();
            for viewpoint in viewpoints.values() {
                all.extend(viewpoint.annotations.annotations.iter().cloned());
            }
            (all, None, true)
        }
    };

    Ok(JudgeOutcome {
        set: normalize_final(&raw, options.span_overlap_collapse),
        analysis,
        parse_failed,
        warnings,
        calls: recorder.records,
        stats: recorder.stats,
    })
}

/// Deterministic final-set rules, applied on top of the judge output:
/// non-translation is exclusive; exact duplicates collapse; a shared
/// normalized span keeps only its most severe annotation, ties broken
/// by typology order (accuracy, fluency, terminology, style);
/// no-error annotations drop. Survivors keep input order.
pub fn normalize_final(annotations: &[ErrorAnnotation], overlap_collapse: bool) -> AnnotationSet {
    if let Some(nt) = annotations.iter().find(|a| a.is_non_translation()) {
        let mut nt = nt.clone();
        nt.span = Span::All;
        return AnnotationSet {
            unit_key: None,
            annotations: vec![nt],
            provenance: Provenance::Judge,
        };
    }

    let candidates: Vec<&ErrorAnnotation> =
        annotations.iter().filter(|a| !a.is_no_error()).collect();

    // Group indices by span: exact normalized equality, or
    // containment when overlap collapsing is on.
    let spans: Vec<String> = candidates.iter().map(|a| a.span.normalized()).collect();
    let mut group_of: Vec<usize> = Vec::with_capacity(candidates.len());
    let mut group_keys: Vec<String> = Vec::new();
    for span in &spans {
        let found = group_keys.iter().position(|key| {
            if overlap_collapse {
                key.contains(span.as_str()) || span.contains(key.as_str())
            } else {
                key == span
            }
        });
        match found {
            Some(g) => {
                if overlap_collapse && span.len() > group_keys[g].len() {
                    group_keys[g] = span.clone();
                }
                group_of.push(g);
            }
            None => {
                group_keys.push(span.clone());
                group_of.push(group_keys.len() - 1);
            }
        }
    }

    // Winner per group: severity desc, typology rank asc, input order.
    let mut winner: Vec<Option<usize>> = vec![None; group_keys.len()];
    for (i, ann) in candidates.iter().enumerate() {
        let g = group_of[i];
        match winner[g] {
            None => winner[g] = Some(i),
            Some(best) => {
                let current = candidates[best];
                let better = (ann.severity > current.severity)
                    || (ann.severity == current.severity
                        && ann.category.top.typology_rank() < current.category.top.typology_rank());
                if better {
                    winner[g] = Some(i);
                }
            }
        }
    }

    let mut keep: Vec<usize> = winner.into_iter().flatten().collect();
    keep.sort_unstable();
    // Exact duplicates (same span, category, severity) collapse to
    // the first occurrence.
    let mut seen = Vec::new();
    let mut result = Vec::new();
    for i in keep {
        let key = candidates[i].canonical_key();
        if !seen.contains(&key) {
            seen.push(key);
            result.push(candidates[i].clone());
        }
    }

    AnnotationSet {
        unit_key: None,
        annotations: result,
        provenance: Provenance::Judge,
    }
}

/// Synthesize and score in one step.
pub async fn judge_and_score(
    registry: &Registry,
    gateway: &Gateway,
    unit: &TranslationUnit,
    viewpoints: &BTreeMap<Dimension, Viewpoint>,
    weights: &ScoreWeights,
    options: &JudgeOptions,
) -> Result<(JudgeOutcome, f64), JudgeError> {
    let outcome = synthesize(registry, gateway, unit, viewpoints, options).await?;
    let score = mqm_score(&outcome.set, weights);
    Ok((outcome, score))
}
