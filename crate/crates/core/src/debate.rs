//! Stage 2: per-dimension Pro-Con debate with consensus checking,
//! plus the three alternative strategies (deliberation, interactive
//! review, consultancy review) and the debate-topic variants.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec;
use crate::gateway::{ChatMessage, Gateway, GatewayError};
use crate::mqm::{AnnotationSet, Dimension, Provenance, TranslationUnit};
use crate::prompts::{Bindings, PromptError, Registry};
use crate::stage1::segment_bindings;
use crate::transcript::{CallRecord, CallStats, Recorder, StageTag};

const LEAN_MINOR_GUIDANCE: &str = " When the severity is hard to decide, please lean toward \"minor.\" Only assign \"major\" if it significantly impacts the meaning.";

const CONSULTANCY_OPENING: &str =
    "No challenge has been raised yet. Present the case for your annotations.";

#[derive(Debug, Error)]
pub enum DebateError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("cannot seed an opposing stance from an empty annotation set")]
    EmptyInitial,
    #[error("invalid debate config: {0}")]
    BadConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Consensus,
    Deliberation,
    InteractiveReview,
    ConsultancyReview,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Consensus => "consensus",
            Strategy::Deliberation => "deliberation",
            Strategy::InteractiveReview => "interactive_review",
            Strategy::ConsultancyReview => "consultancy_review",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "consensus" => Ok(Strategy::Consensus),
            "deliberation" => Ok(Strategy::Deliberation),
            "interactive_review" => Ok(Strategy::InteractiveReview),
            "consultancy_review" => Ok(Strategy::ConsultancyReview),
            other => Err(format!("unknown strategy {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DebateTopic {
    Severity,
    Category,
    Entirety,
}

impl DebateTopic {
    pub fn as_str(self) -> &'static str {
        match self {
            DebateTopic::Severity => "severity",
            DebateTopic::Category => "category",
            DebateTopic::Entirety => "entirety",
        }
    }
}

impl std::str::FromStr for DebateTopic {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "severity" => Ok(DebateTopic::Severity),
            "category" => Ok(DebateTopic::Category),
            "entirety" => Ok(DebateTopic::Entirety),
            other => Err(format!("unknown debate topic {other:?}")),
        }
    }
}

/// Turn-prompt template selected by the debate topic.
pub fn debate_turn_template_id(topic: DebateTopic) -> &'static str {
    match topic {
        DebateTopic::Severity => "debate_turn_severity",
        DebateTopic::Category => "debate_turn_category",
        DebateTopic::Entirety => "debate_turn_entirety",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DebateConfig {
    pub strategy: Strategy,
    pub max_rounds: u32,
    pub topic: DebateTopic,
    pub lean_minor: bool,
    pub model_id: String,
    pub temperature: f64,
}

impl Default for DebateConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Consensus,
            max_rounds: 3,
            topic: DebateTopic::Severity,
            lean_minor: true,
            model_id: "gpt-4o-mini".into(),
            temperature: 0.0,
        }
    }
}

impl DebateConfig {
    pub fn validate(&self) -> Result<(), DebateError> {
        if self.max_rounds == 0 {
            return Err(DebateError::BadConfig("max_rounds must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    Pro,
    Con,
    Reviewer,
}

impl Speaker {
    fn as_str(self) -> &'static str {
        match self {
            Speaker::Pro => "pro",
            Speaker::Con => "con",
            Speaker::Reviewer => "reviewer",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DebateTurn {
    pub round: u32,
    pub speaker: Speaker,
    pub statement: String,
    /// Absent when the statement could not be parsed (the speaker's
    /// previous set carries forward).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parsed: Option<AnnotationSet>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DebateOutcome {
    Consensus,
    Fallback,
    Skipped,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DebateTranscript {
    pub dimension: Dimension,
    pub s0: AnnotationSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub con_seed: Option<AnnotationSet>,
    pub turns: Vec<DebateTurn>,
    /// One entry per consensus decision (checker call, equality fast
    /// path, or strategy-judge ruling).
    pub consensus_verdicts: Vec<bool>,
    pub outcome: DebateOutcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judge_statement: Option<String>,
}

/// A debate group's final annotation set for one dimension.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Viewpoint {
    pub dimension: Dimension,
    pub annotations: AnnotationSet,
    pub outcome: DebateOutcome,
}

/// Flip every severity (major <-> minor); categories, spans, and
/// flags are untouched. The flip is symmetric so an all-minor initial
/// evaluation gets an opposing stance too.
pub fn seed_opposing_stance(s0: &AnnotationSet) -> Result<AnnotationSet, DebateError> {
    if s0.is_empty() {
        return Err(DebateError::EmptyInitial);
    }
    let mut seed = s0.clone();
    for ann in &mut seed.annotations {
        ann.severity = ann.severity.flipped();
    }
    Ok(seed)
}

pub struct DebateResult {
    pub viewpoint: Viewpoint,
    pub transcript: DebateTranscript,
    pub calls: Vec<CallRecord>,
    pub stats: CallStats,
    pub warnings: Vec<String>,
}

fn skipped(dimension: Dimension, s0: &AnnotationSet) -> DebateResult {
    DebateResult {
        viewpoint: Viewpoint {
            dimension,
            annotations: AnnotationSet::empty(Provenance::Debate),
            outcome: DebateOutcome::Skipped,
        },
        transcript: DebateTranscript {
            dimension,
            s0: s0.clone(),
            con_seed: None,
            turns: Vec::new(),
            consensus_verdicts: Vec::new(),
            outcome: DebateOutcome::Skipped,
            judge_statement: None,
        },
        calls: Vec::new(),
        stats: CallStats::default(),
        warnings: Vec::new(),
    }
}

struct Debater {
    speaker: Speaker,
    history: Vec<ChatMessage>,
    latest: AnnotationSet,
}

impl Debater {
    fn new(
        speaker: Speaker,
        system: ChatMessage,
        segment: ChatMessage,
        seed: &AnnotationSet,
    ) -> Self {
        Self {
            speaker,
            history: vec![
                system,
                segment,
                ChatMessage::assistant(codec::encode_annotations(seed)),
            ],
            latest: seed.clone(),
        }
    }

    /// One debate turn: show the opponent's latest annotations, call,
    /// parse. On parse failure the previous set carries forward.
    #[allow(clippy::too_many_arguments)]
    async fn turn(
        &mut self,
        registry: &Registry,
        gateway: &Gateway,
        recorder: &mut Recorder,
        turn_template: &str,
        turn_bindings: &Bindings,
        dimension: Dimension,
        round: u32,
        turns: &mut Vec<DebateTurn>,
        warnings: &mut Vec<String>,
    ) -> Result<(), DebateError> {
        let template = registry.template(turn_template)?;
        let rendered = registry.render(template, turn_bindings, None)?;
        self.history.extend(rendered);
        let statement = recorder
            .call(
                gateway,
                StageTag::Debate,
                Some(dimension),
                Some(round),
                format!("debate/{dimension}/r{round}/{}", self.speaker.as_str()),
                self.history.clone(),
            )
            .await?;
        self.history.push(ChatMessage::assistant(statement.clone()));
        let parsed = match codec::extract_annotations(&statement) {
            Ok(parsed) => {
                warnings.extend(parsed.warnings);
                let set = parsed.set.stamped(dimension, Provenance::Debate);
                self.latest = set.clone();
                Some(set)
            }
            Err(_) => {
                warnings.push(format!(
                    "debate/{dimension}/r{round}/{}: unparseable statement; previous set carries forward",
                    self.speaker.as_str()
                ));
                None
            }
        };
        turns.push(DebateTurn { round, speaker: self.speaker, statement, parsed });
        Ok(())
    }

    fn note(&mut self, text: String) {
        self.history.push(ChatMessage::user(text));
    }
}

fn turn_bindings(cfg: &DebateConfig, other_agent_annotations: String) -> Bindings {
    let guidance = if cfg.lean_minor && cfg.topic != DebateTopic::Entirety {
        LEAN_MINOR_GUIDANCE
    } else {
        ""
    };
    Bindings::from([
        ("other_agent_annotations".to_string(), other_agent_annotations),
        ("severity_guidance".to_string(), guidance.to_string()),
    ])
}

fn format_transcript(turns: &[DebateTurn]) -> String {
    let mut out = String::new();
    for turn in turns {
        out.push_str(&format!(
            "[round {}] {}: {}\n",
            turn.round,
            turn.speaker.as_str(),
            turn.statement
        ));
    }
    out
}

/// Pro-Con debate with a consensus checker (the default strategy).
/// Empty s0 skips the debate with zero calls.
pub async fn run_debate(
    registry: &Registry,
    gateway: &Gateway,
    unit: &TranslationUnit,
    dimension: Dimension,
    s0: &AnnotationSet,
    cfg: &DebateConfig,
) -> Result<DebateResult, DebateError> {
    cfg.validate()?;
    if s0.is_empty() {
        return Ok(skipped(dimension, s0));
    }

    let mut warnings = Vec::new();
    let mut recorder = Recorder::new(&cfg.model_id, cfg.temperature);
    let con_seed = seed_opposing_stance(s0)?;
    let system = registry.template(&format!("debater_system_{dimension}"))?;
    let seg_bindings = segment_bindings(registry, unit)?;
    let segment = registry.render(registry.template("debate_segment")?, &seg_bindings, None)?;
    let system_msg = registry.render(system, &Bindings::new(), None)?[0].clone();
    let turn_template = debate_turn_template_id(cfg.topic);

    let mut pro = Debater::new(Speaker::Pro, system_msg.clone(), segment[0].clone(), s0);
    let mut con = Debater::new(Speaker::Con, system_msg, segment[0].clone(), &con_seed);

    let mut turns = Vec::new();
    let mut verdicts = Vec::new();
    let mut outcome = DebateOutcome::Fallback;

    for round in 1..=cfg.max_rounds {
        let bindings = turn_bindings(cfg, codec::encode_annotations(&con.latest));
        pro.turn(
            registry, gateway, &mut recorder, turn_template, &bindings, dimension, round,
            &mut turns, &mut warnings,
        )
        .await?;
        let bindings = turn_bindings(cfg, codec::encode_annotations(&pro.latest));
        con.turn(
            registry, gateway, &mut recorder, turn_template, &bindings, dimension, round,
            &mut turns, &mut warnings,
        )
        .await?;

        // Equality fast path: identical parsed sets need no checker.
        let verdict = if pro.latest.same_annotations(&con.latest) {
            true
        } else {
            let checker = registry.template("consensus_check")?;
            let bindings = Bindings::from([
                ("first_annotations".to_string(), codec::encode_annotations(&pro.latest)),
                ("second_annotations".to_string(), codec::encode_annotations(&con.latest)),
            ]);
            let messages = registry.render(checker, &bindings, None)?;
            let reply = recorder
                .call(
                    gateway,
                    StageTag::Debate,
                    Some(dimension),
                    Some(round),
                    format!("debate/{dimension}/r{round}/checker"),
                    messages,
                )
                .await?;
            codec::extract_yes_no(&reply)
        };
        verdicts.push(verdict);
        if verdict {
            outcome = DebateOutcome::Consensus;
            break;
        }
    }

    // Consensus takes the pro side's latest set; so does the fallback
    // after R rounds (the supportive side of s0).
    let viewpoint = Viewpoint {
        dimension,
        annotations: pro.latest.clone(),
        outcome,
    };
    Ok(DebateResult {
        viewpoint,
        transcript: DebateTranscript {
            dimension,
            s0: s0.clone(),
            con_seed: Some(con_seed),
            turns,
            consensus_verdicts: verdicts,
            outcome,
            judge_statement: None,
        },
        calls: recorder.records,
        stats: recorder.stats,
        warnings,
    })
}

/// Dispatch on the configured strategy. All variants skip on empty s0
/// and terminate within their call bound (consensus 3R, deliberation
/// 2R+1, interactive review 3R+1, consultancy review 2R+1).
pub async fn run_strategy(
    registry: &Registry,
    gateway: &Gateway,
    unit: &TranslationUnit,
    dimension: Dimension,
    s0: &AnnotationSet,
    cfg: &DebateConfig,
) -> Result<DebateResult, DebateError> {
    match cfg.strategy {
        Strategy::Consensus => run_debate(registry, gateway, unit, dimension, s0, cfg).await,
        Strategy::Deliberation => {
            run_judged(registry, gateway, unit, dimension, s0, cfg, false).await
        }
        Strategy::InteractiveReview => {
            run_judged(registry, gateway, unit, dimension, s0, cfg, true).await
        }
        Strategy::ConsultancyReview => {
            run_consultancy(registry, gateway, unit, dimension, s0, cfg).await
        }
    }
}

/// Deliberation (and, with `with_reviewer`, interactive review):
/// pro/con argue for exactly R rounds with no early stop, then a
/// judge reads the transcript and decides.
async fn run_judged(
    registry: &Registry,
    gateway: &Gateway,
    unit: &TranslationUnit,
    dimension: Dimension,
    s0: &AnnotationSet,
    cfg: &DebateConfig,
    with_reviewer: bool,
) -> Result<DebateResult, DebateError> {
    cfg.validate()?;
    if s0.is_empty() {
        return Ok(skipped(dimension, s0));
    }

    let mut warnings = Vec::new();
    let mut recorder = Recorder::new(&cfg.model_id, cfg.temperature);
    let con_seed = seed_opposing_stance(s0)?;
    let system = registry.template(&format!("debater_system_{dimension}"))?;
    let seg_bindings = segment_bindings(registry, unit)?;
    let segment = registry.render(registry.template("debate_segment")?, &seg_bindings, None)?;
    let system_msg = registry.render(system, &Bindings::new(), None)?[0].clone();
    let turn_template = debate_turn_template_id(cfg.topic);

    let mut pro = Debater::new(Speaker::Pro, system_msg.clone(), segment[0].clone(), s0);
    let mut con = Debater::new(Speaker::Con, system_msg, segment[0].clone(), &con_seed);
    let mut turns = Vec::new();

    for round in 1..=cfg.max_rounds {
        let bindings = turn_bindings(cfg, codec::encode_annotations(&con.latest));
        pro.turn(
            registry, gateway, &mut recorder, turn_template, &bindings, dimension, round,
            &mut turns, &mut warnings,
        )
        .await?;
        let bindings = turn_bindings(cfg, codec::encode_annotations(&pro.latest));
        con.turn(
            registry, gateway, &mut recorder, turn_template, &bindings, dimension, round,
            &mut turns, &mut warnings,
        )
        .await?;

        if with_reviewer {
            let reviewer = registry.template("reviewer_interactive")?;
            let mut bindings = seg_bindings.clone();
            bindings.insert("transcript".to_string(), format_transcript(&turns));
            let messages = registry.render(reviewer, &bindings, None)?;
            let questions = recorder
                .call(
                    gateway,
                    StageTag::Debate,
                    Some(dimension),
                    Some(round),
                    format!("debate/{dimension}/r{round}/reviewer"),
                    messages,
                )
                .await?;
            turns.push(DebateTurn {
                round,
                speaker: Speaker::Reviewer,
                statement: questions.clone(),
                parsed: None,
            });
            let note = format!(
                "The reviewer raised the following questions:\n{questions}\nAddress them in your next statement."
            );
            pro.note(note.clone());
            con.note(note);
        }
    }

    judge_transcript(
        registry, gateway, &mut recorder, dimension, s0, Some(con_seed), turns, warnings,
        &seg_bindings,
    )
    .await
}

/// Consultancy review: a single pro debater defends s0 against a
/// reviewer for R rounds, then a judge decides.
async fn run_consultancy(
    registry: &Registry,
    gateway: &Gateway,
    unit: &TranslationUnit,
    dimension: Dimension,
    s0: &AnnotationSet,
    cfg: &DebateConfig,
) -> Result<DebateResult, DebateError> {
    cfg.validate()?;
    if s0.is_empty() {
        return Ok(skipped(dimension, s0));
    }

    let mut warnings = Vec::new();
    let mut recorder = Recorder::new(&cfg.model_id, cfg.temperature);
    let system = registry.template(&format!("debater_system_{dimension}"))?;
    let seg_bindings = segment_bindings(registry, unit)?;
    let segment = registry.render(registry.template("debate_segment")?, &seg_bindings, None)?;
    let system_msg = registry.render(system, &Bindings::new(), None)?[0].clone();

    let mut pro = Debater::new(Speaker::Pro, system_msg, segment[0].clone(), s0);
    let mut turns = Vec::new();
    let mut challenge = CONSULTANCY_OPENING.to_string();

    for round in 1..=cfg.max_rounds {
        let guidance = if cfg.lean_minor { LEAN_MINOR_GUIDANCE } else { "" };
        let bindings = Bindings::from([
            ("reviewer_challenge".to_string(), challenge.clone()),
            ("severity_guidance".to_string(), guidance.to_string()),
        ]);
        pro.turn(
            registry, gateway, &mut recorder, "consultancy_turn", &bindings, dimension, round,
            &mut turns, &mut warnings,
        )
        .await?;

        let reviewer = registry.template("reviewer_consultancy")?;
        let mut bindings = seg_bindings.clone();
        bindings.insert("transcript".to_string(), format_transcript(&turns));
        let messages = registry.render(reviewer, &bindings, None)?;
        challenge = recorder
            .call(
                gateway,
                StageTag::Debate,
                Some(dimension),
                Some(round),
                format!("debate/{dimension}/r{round}/reviewer"),
                messages,
            )
            .await?;
        turns.push(DebateTurn {
            round,
            speaker: Speaker::Reviewer,
            statement: challenge.clone(),
            parsed: None,
        });
    }

    judge_transcript(
        registry, gateway, &mut recorder, dimension, s0, None, turns, warnings, &seg_bindings,
    )
    .await
}

/// Final step of the judged strategies: one judge call over the full
/// transcript. A parseable ruling becomes the viewpoint (counted as a
/// consensus verdict); a parse failure falls back to s0.
#[allow(clippy::too_many_arguments)]
async fn judge_transcript(
    registry: &Registry,
    gateway: &Gateway,
    recorder: &mut Recorder,
    dimension: Dimension,
    s0: &AnnotationSet,
    con_seed: Option<AnnotationSet>,
    turns: Vec<DebateTurn>,
    mut warnings: Vec<String>,
    seg_bindings: &Bindings,
) -> Result<DebateResult, DebateError> {
    let judge = registry.template("debate_judge")?;
    let mut bindings = seg_bindings.clone();
    bindings.insert("transcript".to_string(), format_transcript(&turns));
    let messages = registry.render(judge, &bindings, None)?;
    let ruling = recorder
        .call(
            gateway,
            StageTag::Debate,
            Some(dimension),
            None,
            format!("debate/{dimension}/judge"),
            messages,
        )
        .await?;

    let (annotations, outcome, verdict) = match codec::extract_annotations(&ruling) {
        Ok(parsed) => {
            warnings.extend(parsed.warnings);
            (
                parsed.set.stamped(dimension, Provenance::Debate),
                DebateOutcome::Consensus,
                true,
            )
        }
        Err(_) => {
            warnings.push(format!(
                "debate/{dimension}/judge: unparseable ruling; falling back to the initial evaluation"
            ));
            (s0.clone(), DebateOutcome::Fallback, false)
        }
    };

    Ok(DebateResult {
        viewpoint: Viewpoint { dimension, annotations, outcome },
        transcript: DebateTranscript {
            dimension,
            s0: s0.clone(),
            con_seed,
            turns,
            consensus_verdicts: vec![verdict],
            outcome,
            judge_statement: Some(ruling),
        },
        calls: std::mem::take(&mut recorder.records),
        stats: recorder.stats,
        warnings,
    })
}

/// Upper bound on gateway calls for a debated dimension.
pub fn call_bound(strategy: Strategy, max_rounds: u32) -> u32 {
    match strategy {
        Strategy::Consensus => 3 * max_rounds,
        Strategy::Deliberation => 2 * max_rounds + 1,
        Strategy::InteractiveReview => 3 * max_rounds + 1,
        Strategy::ConsultancyReview => 2 * max_rounds + 1,
    }
}
