//! Stage 1: dimension partition and the initial per-dimension
//! evaluation. Each configured dimension gets one few-shot call; a
//! malformed reply earns exactly one repair turn before degrading to
//! the empty set with an error flag.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec;
use crate::gateway::{ChatMessage, Gateway, GatewayError};
use crate::mqm::{AnnotationSet, Dimension, Provenance, TranslationUnit};
use crate::prompts::{Bindings, PromptError, Registry};
use crate::transcript::{CallRecord, CallStats, Recorder, StageTag};

pub const REPAIR_PROMPT: &str =
    "Your previous reply could not be parsed. Re-emit valid JSON only, in the requested format.";

#[derive(Debug, Error)]
pub enum Stage1Error {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("no example pack for {language_pair:?} and zero-shot fallback is disabled")]
    NoExamples { language_pair: String },
    #[error("invalid dimension set: {0}")]
    BadDimensions(String),
}

/// Ordered, duplicate-free subset of the four dimensions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Dimension>", into = "Vec<Dimension>")]
pub struct DimensionSet(Vec<Dimension>);

impl DimensionSet {
    pub fn new(dims: Vec<Dimension>) -> Result<Self, Stage1Error> {
        if dims.is_empty() {
            return Err(Stage1Error::BadDimensions("must be nonempty".into()));
        }
        for (i, d) in dims.iter().enumerate() {
            if dims[..i].contains(d) {
                return Err(Stage1Error::BadDimensions(format!("duplicate {d}")));
            }
        }
        Ok(Self(dims))
    }

    pub fn all() -> Self {
        Self(Dimension::ALL.to_vec())
    }

    pub fn iter(&self) -> impl Iterator<Item = Dimension> + '_ {
        self.0.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, dim: Dimension) -> bool {
        self.0.contains(&dim)
    }

    /// Comma list, e.g. "accuracy,fluency".
    pub fn parse_list(text: &str) -> Result<Self, Stage1Error> {
        let dims = text
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| s.parse::<Dimension>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(Stage1Error::BadDimensions)?;
        Self::new(dims)
    }
}

impl Default for DimensionSet {
    fn default() -> Self {
        Self::all()
    }
}

impl TryFrom<Vec<Dimension>> for DimensionSet {
    type Error = String;

    fn try_from(dims: Vec<Dimension>) -> Result<Self, String> {
        DimensionSet::new(dims).map_err(|e| e.to_string())
    }
}

impl From<DimensionSet> for Vec<Dimension> {
    fn from(set: DimensionSet) -> Self {
        set.0
    }
}

impl std::fmt::Display for DimensionSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let names: Vec<&str> = self.0.iter().map(|d| d.as_str()).collect();
        f.write_str(&names.join(","))
    }
}

#[derive(Debug, Clone)]
pub struct Stage1Options {
    pub model_id: String,
    pub temperature: f64,
    /// Few-shot count; 0 renders the bare prompt.
    pub shots: usize,
    /// Permit running without a pack for the unit's language pair.
    pub zero_shot_fallback: bool,
}

impl Default for Stage1Options {
    fn default() -> Self {
        Self {
            model_id: "gpt-4o-mini".into(),
            temperature: 0.0,
            shots: 4,
            zero_shot_fallback: false,
        }
    }
}

/// Result of one initial evaluation: s0 plus everything soft that
/// happened on the way.
#[derive(Debug)]
pub struct Stage1Outcome {
    pub set: AnnotationSet,
    /// Both the call and its repair failed to parse.
    pub parse_failed: bool,
    pub warnings: Vec<String>,
    pub calls: Vec<CallRecord>,
    pub stats: CallStats,
}

pub fn segment_bindings(
    registry: &Registry,
    unit: &TranslationUnit,
) -> Result<Bindings, PromptError> {
    let (src, tgt) = registry.resolve_language_names(&unit.language_pair)?;
    Ok(Bindings::from([
        ("src_lng".to_string(), src),
        ("tgt_lng".to_string(), tgt),
        ("source_segment".to_string(), unit.source_text.clone()),
        ("target_segment".to_string(), unit.hypothesis_text.clone()),
    ]))
}

/// One dimension's initial evaluation s0.
pub async fn initial_evaluate(
    registry: &Registry,
    gateway: &Gateway,
    unit: &TranslationUnit,
    dimension: Dimension,
    options: &Stage1Options,
) -> Result<Stage1Outcome, Stage1Error> {
    let template = registry.template(&format!("stage1_{dimension}"))?;
    let bindings = segment_bindings(registry, unit)?;

    let examples = match registry.pack(&unit.language_pair) {
        Some(pack) if options.shots > 0 => pack.for_dimension(dimension, options.shots).to_vec(),
        Some(_) => Vec::new(),
        None if options.shots == 0 => Vec::new(),
        None if options.zero_shot_fallback => Vec::new(),
        None => {
            return Err(Stage1Error::NoExamples {
                language_pair: unit.language_pair.clone(),
            })
        }
    };
    let mut warnings = Vec::new();
    if options.shots > 0 && examples.is_empty() {
        warnings.push(format!(
            "no few-shot examples for {}/{dimension}; ran zero-shot",
            unit.language_pair
        ));
    }

    let messages = registry.render(template, &bindings, Some(&examples))?;
    let mut recorder = Recorder::new(&options.model_id, options.temperature);
    let content = recorder
        .call(
            gateway,
            StageTag::Stage1,
            Some(dimension),
            None,
            format!("stage1/{dimension}"),
            messages.clone(),
        )
        .await?;

    let (set, parse_failed) = match codec::extract_annotations(&content) {
        Ok(parsed) => {
            warnings.extend(parsed.warnings);
            (parsed.set, false)
        }
        Err(first_err) => {
            // One repair turn, then degrade to the empty set.
            let mut repair_messages = messages;
            repair_messages.push(ChatMessage::assistant(content));
            repair_messages.push(ChatMessage::user(REPAIR_PROMPT));
            recorder.stats.repairs += 1;
            let repaired = recorder
                .call(
                    gateway,
                    StageTag::Stage1,
                    Some(dimension),
                    None,
                    format!("stage1/{dimension}/repair"),
                    repair_messages,
                )
                .await?;
            match codec::extract_annotations(&repaired) {
                Ok(parsed) => {
                    warnings.extend(parsed.warnings);
                    (parsed.set, false)
                }
                Err(_) => {
                    warnings.push(format!(
                        "stage1/{dimension}: unparseable after repair ({first_err}); empty set"
                    ));
                    (AnnotationSet::empty(Provenance::Stage1), true)
                }
            }
        }
    };

    Ok(Stage1Outcome {
        set: set.stamped(dimension, Provenance::Stage1),
        parse_failed,
        warnings,
        calls: recorder.records,
        stats: recorder.stats,
    })
}

/// One initial evaluation per dimension; a dimension's degradation
/// never blocks another. Transport errors do propagate: they abort
/// the unit, not the run.
pub async fn evaluate_all_dimensions(
    registry: &Registry,
    gateway: &Gateway,
    unit: &TranslationUnit,
    dimensions: &DimensionSet,
    options: &Stage1Options,
) -> Result<BTreeMap<Dimension, Stage1Outcome>, Stage1Error> {
    let mut results = BTreeMap::new();
    for dimension in dimensions.iter() {
        let outcome = initial_evaluate(registry, gateway, unit, dimension, options).await?;
        results.insert(dimension, outcome);
    }
    Ok(results)
}
