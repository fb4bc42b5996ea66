//! MQM domain model: translation units, error annotations, and the
//! deterministic scoring rules every other module consumes.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MqmError {
    #[error("score {0} is not a valid MQM score (must be finite and <= 0)")]
    InvalidScore(f64),
    #[error("translation unit {0}: {1}")]
    InvalidUnit(String, String),
    #[error("invalid score weights: {0}")]
    InvalidWeights(String),
    #[error("cannot seed an opposing stance from an empty annotation set")]
    EmptyStance,
}

/// Identity of one (source, hypothesis) pair within a dataset.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct UnitKey {
    pub language_pair: String,
    pub system_id: String,
    pub doc_id: String,
    pub seg_id: String,
}

impl fmt::Display for UnitKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}/{}/{}",
            self.language_pair, self.system_id, self.doc_id, self.seg_id
        )
    }
}

/// One (source, hypothesis) pair to evaluate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslationUnit {
    pub language_pair: String,
    pub doc_id: String,
    pub seg_id: String,
    pub system_id: String,
    pub source_text: String,
    pub hypothesis_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_text: Option<String>,
}

impl TranslationUnit {
    pub fn key(&self) -> UnitKey {
        UnitKey {
            language_pair: self.language_pair.clone(),
            system_id: self.system_id.clone(),
            doc_id: self.doc_id.clone(),
            seg_id: self.seg_id.clone(),
        }
    }

    pub fn validate(&self) -> Result<(), MqmError> {
        if self.source_text.is_empty() {
            return Err(MqmError::InvalidUnit(
                self.key().to_string(),
                "empty source text".into(),
            ));
        }
        if self.hypothesis_text.is_empty() {
            return Err(MqmError::InvalidUnit(
                self.key().to_string(),
                "empty hypothesis text".into(),
            ));
        }
        Ok(())
    }
}

/// Error severity. Exactly two values; `Major` outranks `Minor`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Minor,
    Major,
}

impl Severity {
    pub fn flipped(self) -> Self {
        match self {
            Severity::Minor => Severity::Major,
            Severity::Major => Severity::Minor,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Severity::Minor => "minor",
            Severity::Major => "major",
        }
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One of the four decoupled evaluation dimensions.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum Dimension {
    Accuracy,
    Fluency,
    Terminology,
    Style,
}

impl Dimension {
    pub const ALL: [Dimension; 4] = [
        Dimension::Accuracy,
        Dimension::Fluency,
        Dimension::Terminology,
        Dimension::Style,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Accuracy => "accuracy",
            Dimension::Fluency => "fluency",
            Dimension::Terminology => "terminology",
            Dimension::Style => "style",
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Dimension {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "accuracy" => Ok(Dimension::Accuracy),
            "fluency" => Ok(Dimension::Fluency),
            "terminology" => Ok(Dimension::Terminology),
            "style" => Ok(Dimension::Style),
            other => Err(format!("unknown dimension {other:?}")),
        }
    }
}

/// Top-level MQM category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TopCategory {
    Accuracy,
    Fluency,
    Terminology,
    Style,
    LocaleConvention,
    Other,
    SourceError,
    NonTranslation,
    NoError,
}

impl TopCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            TopCategory::Accuracy => "accuracy",
            TopCategory::Fluency => "fluency",
            TopCategory::Terminology => "terminology",
            TopCategory::Style => "style",
            TopCategory::LocaleConvention => "locale-convention",
            TopCategory::Other => "other",
            TopCategory::SourceError => "source-error",
            TopCategory::NonTranslation => "non-translation",
            TopCategory::NoError => "no-error",
        }
    }

    /// Tie-break rank used by the final judge: accuracy before fluency
    /// before terminology before style; everything else after.
    pub fn typology_rank(self) -> u8 {
        match self {
            TopCategory::Accuracy => 0,
            TopCategory::Fluency => 1,
            TopCategory::Terminology => 2,
            TopCategory::Style => 3,
            TopCategory::LocaleConvention => 4,
            TopCategory::Other => 5,
            TopCategory::SourceError => 6,
            TopCategory::NonTranslation => 7,
            TopCategory::NoError => 8,
        }
    }
}

impl From<Dimension> for TopCategory {
    fn from(d: Dimension) -> Self {
        match d {
            Dimension::Accuracy => TopCategory::Accuracy,
            Dimension::Fluency => TopCategory::Fluency,
            Dimension::Terminology => TopCategory::Terminology,
            Dimension::Style => TopCategory::Style,
        }
    }
}

impl fmt::Display for TopCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// MQM subcategory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SubCategory {
    Addition,
    Omission,
    Mistranslation,
    UntranslatedText,
    Punctuation,
    Spelling,
    Grammar,
    Register,
    Inconsistency,
    CharacterEncoding,
    InappropriateForContext,
    InconsistentUse,
    Awkward,
}

impl SubCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            SubCategory::Addition => "addition",
            SubCategory::Omission => "omission",
            SubCategory::Mistranslation => "mistranslation",
            SubCategory::UntranslatedText => "untranslated-text",
            SubCategory::Punctuation => "punctuation",
            SubCategory::Spelling => "spelling",
            SubCategory::Grammar => "grammar",
            SubCategory::Register => "register",
            SubCategory::Inconsistency => "inconsistency",
            SubCategory::CharacterEncoding => "character-encoding",
            SubCategory::InappropriateForContext => "inappropriate-for-context",
            SubCategory::InconsistentUse => "inconsistent-use",
            SubCategory::Awkward => "awkward",
        }
    }
}

impl fmt::Display for SubCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A `top/sub` category pair. Legality of the pair follows the MQM
/// hierarchy and is checked softly (see [`validate_annotation`]);
/// parsers may construct illegal pairs so that bad model output is
/// surfaced as a warning instead of dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CategoryPath {
    pub top: TopCategory,
    pub sub: Option<SubCategory>,
}

impl CategoryPath {
    pub fn new(top: TopCategory, sub: Option<SubCategory>) -> Self {
        Self { top, sub }
    }

    pub fn top_only(top: TopCategory) -> Self {
        Self { top, sub: None }
    }

    pub fn is_legal(&self) -> bool {
        use SubCategory::*;
        match (self.top, self.sub) {
            (_, None) => true,
            (TopCategory::Accuracy, Some(s)) => {
                matches!(s, Addition | Omission | Mistranslation | UntranslatedText)
            }
            (TopCategory::Fluency, Some(s)) => matches!(
                s,
                Punctuation | Spelling | Grammar | Register | Inconsistency | CharacterEncoding
            ),
            (TopCategory::Terminology, Some(s)) => {
                matches!(s, InappropriateForContext | InconsistentUse)
            }
            (TopCategory::Style, Some(s)) => matches!(s, Awkward),
            // non-translation, no-error, other, source-error and
            // locale-convention take no subcategory here.
            (_, Some(_)) => false,
        }
    }

    /// Parse free-form category text. Total: unknown category text
    /// degrades to `other` with a warning; a recognizable top with an
    /// unrecognizable sub keeps the top and drops the sub.
    pub fn parse_lenient(text: &str) -> (Self, Vec<String>) {
        let mut warnings = Vec::new();
        let raw = text.trim();
        let (top_raw, sub_raw) = match raw.split_once('/') {
            Some((t, s)) => (t.trim(), Some(s.trim())),
            None => (raw, None),
        };
        let top = match parse_top(top_raw) {
            Some(t) => t,
            None => {
                warnings.push(format!("unknown category {raw:?}; mapped to 'other'"));
                return (CategoryPath::top_only(TopCategory::Other), warnings);
            }
        };
        let sub = match sub_raw {
            None | Some("") => None,
            Some(s) => match parse_sub(s) {
                Some(sub) => Some(sub),
                None => {
                    warnings.push(format!(
                        "unknown subcategory {s:?} under {}; dropped",
                        top.as_str()
                    ));
                    None
                }
            },
        };
        (CategoryPath { top, sub }, warnings)
    }
}

fn normalize_token(s: &str) -> String {
    s.trim()
        .to_lowercase()
        .chars()
        .map(|c| if c == '_' || c == ' ' { '-' } else { c })
        .collect()
}

fn parse_top(s: &str) -> Option<TopCategory> {
    match normalize_token(s).as_str() {
        "accuracy" => Some(TopCategory::Accuracy),
        "fluency" => Some(TopCategory::Fluency),
        "terminology" => Some(TopCategory::Terminology),
        "style" => Some(TopCategory::Style),
        "locale-convention" | "locale" => Some(TopCategory::LocaleConvention),
        "other" => Some(TopCategory::Other),
        "source-error" => Some(TopCategory::SourceError),
        "non-translation" | "nontranslation" => Some(TopCategory::NonTranslation),
        "no-error" | "noerror" => Some(TopCategory::NoError),
        _ => None,
    }
}

fn parse_sub(s: &str) -> Option<SubCategory> {
    use SubCategory::*;
    match normalize_token(s).as_str() {
        "addition" | "accuracy-addition" => Some(Addition),
        // "omission translation" appears verbatim in model output.
        "omission" | "omission-translation" => Some(Omission),
        "mistranslation" => Some(Mistranslation),
        "untranslated-text" | "untranslated" => Some(UntranslatedText),
        "punctuation" => Some(Punctuation),
        "spelling" => Some(Spelling),
        "grammar" => Some(Grammar),
        "register" => Some(Register),
        "inconsistency" => Some(Inconsistency),
        "character-encoding" => Some(CharacterEncoding),
        "inappropriate-for-context" | "inappropriate" => Some(InappropriateForContext),
        "inconsistent-use" => Some(InconsistentUse),
        "awkward" | "unnatural-or-awkward" => Some(Awkward),
        _ => None,
    }
}

impl fmt::Display for CategoryPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.sub {
            Some(sub) => write!(f, "{}/{}", self.top, sub),
            None => write!(f, "{}", self.top),
        }
    }
}

/// Error span: either a literal text span or the whole-segment
/// sentinel used by non-translation annotations.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Span {
    All,
    Text(String),
}

impl Span {
    pub fn as_payload_str(&self) -> &str {
        match self {
            Span::All => "all",
            Span::Text(t) => t,
        }
    }

    /// Trim + casefold, the normalization used for span comparison.
    pub fn normalized(&self) -> String {
        match self {
            // Unlikely to collide with a real span.
            Span::All => "\u{0}ALL\u{0}".to_string(),
            Span::Text(t) => t.trim().to_lowercase(),
        }
    }
}

/// One error span with category path, severity, and source-error flag.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorAnnotation {
    pub span: Span,
    pub category: CategoryPath,
    pub severity: Severity,
    pub is_source_error: bool,
    /// Which dimension produced this annotation (provenance only).
    pub dimension_origin: Option<Dimension>,
}

impl ErrorAnnotation {
    pub fn new(span: Span, category: CategoryPath, severity: Severity) -> Self {
        Self {
            span,
            category,
            severity,
            is_source_error: false,
            dimension_origin: None,
        }
    }

    pub fn non_translation() -> Self {
        Self::new(
            Span::All,
            CategoryPath::top_only(TopCategory::NonTranslation),
            Severity::Major,
        )
    }

    pub fn is_non_translation(&self) -> bool {
        self.category.top == TopCategory::NonTranslation
    }

    pub fn is_no_error(&self) -> bool {
        self.category.top == TopCategory::NoError
    }

    /// Canonical tuple for multiset comparisons (ignores provenance).
    pub fn canonical_key(&self) -> (String, CategoryPath, Severity, bool) {
        (
            self.span.normalized(),
            self.category,
            self.severity,
            self.is_source_error,
        )
    }
}

// Wire form shared by payloads and output files:
// {"error_span": ..., "category": ..., "severity": ..., "is_source_error": ...}
#[derive(Serialize, Deserialize)]
struct AnnotationWire {
    error_span: String,
    category: String,
    severity: String,
    #[serde(default, deserialize_with = "de_yes_no_bool")]
    is_source_error: bool,
}

fn de_yes_no_bool<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        B(bool),
        S(String),
    }
    Ok(match Raw::deserialize(d)? {
        Raw::B(b) => b,
        Raw::S(s) => matches!(s.trim().to_ascii_lowercase().as_str(), "yes" | "true"),
    })
}

impl Serialize for ErrorAnnotation {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        AnnotationWire {
            error_span: self.span.as_payload_str().to_string(),
            category: self.category.to_string(),
            severity: self.severity.as_str().to_string(),
            is_source_error: self.is_source_error,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ErrorAnnotation {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let wire = AnnotationWire::deserialize(deserializer)?;
        let (category, _) = CategoryPath::parse_lenient(&wire.category);
        let severity = match wire.severity.trim().to_ascii_lowercase().as_str() {
            "major" | "critical" => Severity::Major,
            _ => Severity::Minor,
        };
        let span = if category.top == TopCategory::NonTranslation {
            Span::All
        } else {
            Span::Text(wire.error_span)
        };
        Ok(ErrorAnnotation {
            span,
            category,
            severity,
            is_source_error: wire.is_source_error,
            dimension_origin: None,
        })
    }
}

/// Where an annotation set came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Stage1,
    Debate,
    Judge,
    Gemba,
    Eaprompt,
    Gold,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Stage1 => "stage1",
            Provenance::Debate => "debate",
            Provenance::Judge => "judge",
            Provenance::Gemba => "gemba",
            Provenance::Eaprompt => "eaprompt",
            Provenance::Gold => "gold",
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// An ordered list of annotations for one unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationSet {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit_key: Option<UnitKey>,
    pub annotations: Vec<ErrorAnnotation>,
    pub provenance: Provenance,
}

impl AnnotationSet {
    pub fn empty(provenance: Provenance) -> Self {
        Self {
            unit_key: None,
            annotations: Vec::new(),
            provenance,
        }
    }

    /// Build a set, enforcing non-translation exclusivity: if any
    /// non-translation annotation is present, it is kept alone (span
    /// forced to the whole segment) and everything else is dropped
    /// with a warning.
    pub fn new_normalized(
        annotations: Vec<ErrorAnnotation>,
        provenance: Provenance,
    ) -> (Self, Vec<String>) {
        let mut warnings = Vec::new();
        let annotations = if let Some(nt) = annotations.iter().find(|a| a.is_non_translation()) {
            if annotations.len() > 1 {
                warnings.push(format!(
                    "non-translation must be the only annotation; dropped {} other(s)",
                    annotations.len() - 1
                ));
            }
            let mut nt = nt.clone();
            nt.span = Span::All;
            vec![nt]
        } else {
            annotations
        };
        (
            Self {
                unit_key: None,
                annotations,
                provenance,
            },
            warnings,
        )
    }

    pub fn is_empty(&self) -> bool {
        self.annotations.is_empty()
    }

    pub fn len(&self) -> usize {
        self.annotations.len()
    }

    pub fn has_non_translation(&self) -> bool {
        self.annotations.iter().any(|a| a.is_non_translation())
    }

    /// Stamp every annotation with a dimension of origin and reset
    /// the set's provenance.
    pub fn stamped(mut self, dimension: Dimension, provenance: Provenance) -> Self {
        for a in &mut self.annotations {
            a.dimension_origin = Some(dimension);
        }
        self.provenance = provenance;
        self
    }

    /// Multiset equality over canonical annotation keys; provenance
    /// and ordering are ignored.
    pub fn same_annotations(&self, other: &AnnotationSet) -> bool {
        if self.annotations.len() != other.annotations.len() {
            return false;
        }
        let mut a: Vec<_> = self.annotations.iter().map(|x| x.canonical_key()).collect();
        let mut b: Vec<_> = other.annotations.iter().map(|x| x.canonical_key()).collect();
        a.sort();
        b.sort();
        a == b
    }
}

/// Severity weights and the score floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreWeights {
    pub w_major: f64,
    pub w_minor: f64,
    pub floor: f64,
}

impl Default for ScoreWeights {
    fn default() -> Self {
        Self {
            w_major: 5.0,
            w_minor: 1.0,
            floor: -25.0,
        }
    }
}

impl ScoreWeights {
    pub fn validate(&self) -> Result<(), MqmError> {
        if !(self.w_major >= self.w_minor && self.w_minor >= 0.0) {
            return Err(MqmError::InvalidWeights(format!(
                "need w_major >= w_minor >= 0, got ({}, {})",
                self.w_major, self.w_minor
            )));
        }
        if self.floor > 0.0 {
            return Err(MqmError::InvalidWeights(format!(
                "floor must be <= 0, got {}",
                self.floor
            )));
        }
        Ok(())
    }
}

/// Weighted error-count score. Non-translation scores exactly the
/// floor; otherwise `-w_major*n_major - w_minor*n_minor`, clamped to
/// the floor. No-error annotations contribute nothing.
pub fn mqm_score(set: &AnnotationSet, w: &ScoreWeights) -> f64 {
    if set.has_non_translation() {
        return w.floor;
    }
    let mut majors = 0u64;
    let mut minors = 0u64;
    for a in &set.annotations {
        if a.is_no_error() {
            continue;
        }
        match a.severity {
            Severity::Major => majors += 1,
            Severity::Minor => minors += 1,
        }
    }
    let raw = -(w.w_major * majors as f64) - (w.w_minor * minors as f64);
    // + 0.0 folds -0.0 into 0.0 so perfect segments print as "0".
    raw.max(w.floor) + 0.0
}

/// Raw weighted error count without the floor clamp. Used to check a
/// model-reported score against its own error lists.
pub fn raw_weighted_score(set: &AnnotationSet, w: &ScoreWeights) -> f64 {
    let mut majors = 0u64;
    let mut minors = 0u64;
    for a in &set.annotations {
        if a.is_no_error() {
            continue;
        }
        match a.severity {
            Severity::Major => majors += 1,
            Severity::Minor => minors += 1,
        }
    }
    -(w.w_major * majors as f64) - (w.w_minor * minors as f64) + 0.0
}

/// Quality bucket of a segment-level score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QualityBucket {
    HQ,
    MQ,
    LQ,
}

impl fmt::Display for QualityBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QualityBucket::HQ => "HQ",
            QualityBucket::MQ => "MQ",
            QualityBucket::LQ => "LQ",
        })
    }
}

/// HQ iff score == 0; MQ iff -5 < score < 0; LQ iff score <= -5.
pub fn classify_quality_bucket(score: f64) -> Result<QualityBucket, MqmError> {
    if !score.is_finite() || score > 0.0 {
        return Err(MqmError::InvalidScore(score));
    }
    Ok(if score == 0.0 {
        QualityBucket::HQ
    } else if score > -5.0 {
        QualityBucket::MQ
    } else {
        QualityBucket::LQ
    })
}

/// Soft checks against a unit. Always returns warnings, never fails:
/// LLMs paraphrase spans and a run must not abort on them.
pub fn validate_annotation(ann: &ErrorAnnotation, unit: &TranslationUnit) -> Vec<String> {
    let mut warnings = Vec::new();
    if let Span::Text(span) = &ann.span {
        if !ann.is_no_error() {
            let expected = if ann.is_source_error {
                &unit.source_text
            } else {
                &unit.hypothesis_text
            };
            if !expected.contains(span.as_str()) {
                let side = if ann.is_source_error { "source" } else { "hypothesis" };
                warnings.push(format!(
                    "span {span:?} not found in {side} text of {}",
                    unit.key()
                ));
            }
        }
    }
    if !ann.category.is_legal() {
        warnings.push(format!("illegal category pair {}", ann.category));
    }
    warnings
}

/// Gold annotations keyed by unit.
pub type GoldAnnotations = BTreeMap<UnitKey, AnnotationSet>;
