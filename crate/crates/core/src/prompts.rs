//! Prompt registry: the single source of truth for what each agent
//! sees. Templates are versioned text assets with front-matter and a
//! role-tagged body; few-shot packs are structured files. Placeholders
//! use the `##name##` convention.

use std::collections::{BTreeMap, HashMap};
use std::sync::OnceLock;

use serde::Deserialize;
use thiserror::Error;

use crate::codec;
use crate::gateway::{ChatMessage, Role};
use crate::mqm::Dimension;

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("template asset {0}: {1}")]
    BadAsset(String, String),
    #[error("unknown template id {0:?}")]
    UnknownTemplate(String),
    #[error("unknown language pair {0:?}")]
    UnknownLanguagePair(String),
    #[error("no example pack for language pair {0:?}")]
    MissingPack(String),
    #[error("unbound placeholder ##{0}## in template {1:?}")]
    UnboundPlaceholder(String, String),
    #[error("template {0:?} (stage {1}) does not take few-shot examples")]
    ExamplesForbidden(String, String),
    #[error("template {0:?} has no user turn to repeat for few-shot examples")]
    NoUserTurn(String),
}

/// Which part of the pipeline a template belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Stage1,
    DebateTurn,
    ConsensusCheck,
    Judge,
    Gemba,
    Eaprompt,
    Reviewer,
}

impl Stage {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "stage1" => Stage::Stage1,
            "debate_turn" => Stage::DebateTurn,
            "consensus_check" => Stage::ConsensusCheck,
            "judge" => Stage::Judge,
            "gemba" => Stage::Gemba,
            "eaprompt" => Stage::Eaprompt,
            "reviewer" => Stage::Reviewer,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Stage1 => "stage1",
            Stage::DebateTurn => "debate_turn",
            Stage::ConsensusCheck => "consensus_check",
            Stage::Judge => "judge",
            Stage::Gemba => "gemba",
            Stage::Eaprompt => "eaprompt",
            Stage::Reviewer => "reviewer",
        }
    }

    /// Only the few-shot prompt stages repeat (user, assistant) pairs.
    pub fn allows_examples(self) -> bool {
        matches!(self, Stage::Stage1 | Stage::Gemba)
    }
}

#[derive(Debug, Clone)]
pub struct PromptTemplate {
    pub id: String,
    pub stage: Stage,
    pub dimension: Option<Dimension>,
    pub version: u32,
    pub body: Vec<(Role, String)>,
    pub placeholders: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct FewShotExample {
    #[serde(default)]
    pub language_pair: String,
    #[serde(skip)]
    pub dimension: Option<Dimension>,
    pub source: String,
    pub translation: String,
    pub annotations_payload: String,
}

/// Per-language-pair few-shot examples, four per dimension.
#[derive(Debug, Clone)]
pub struct ExamplePack {
    pub language_pair: String,
    /// Display names for a pair the built-in table does not know.
    pub language_names: Option<(String, String)>,
    pub examples: BTreeMap<Dimension, Vec<FewShotExample>>,
}

impl ExamplePack {
    pub fn for_dimension(&self, dim: Dimension, shots: usize) -> &[FewShotExample] {
        match self.examples.get(&dim) {
            Some(list) => &list[..shots.min(list.len())],
            None => &[],
        }
    }
}

/// Bindings for `##name##` placeholders.
pub type Bindings = BTreeMap<String, String>;

#[derive(Clone)]
pub struct Registry {
    templates: BTreeMap<String, PromptTemplate>,
    packs: BTreeMap<String, ExamplePack>,
    gemba_examples: Vec<FewShotExample>,
    languages: BTreeMap<String, (String, String)>,
}

macro_rules! template_assets {
    ($($name:literal),+ $(,)?) => {
        [$(($name, include_str!(concat!("../assets/templates/", $name, ".tmpl")))),+]
    };
}

const TEMPLATE_ASSETS: [(&str, &str); 20] = template_assets![
    "stage1_accuracy",
    "stage1_fluency",
    "stage1_terminology",
    "stage1_style",
    "debater_system_accuracy",
    "debater_system_fluency",
    "debater_system_terminology",
    "debater_system_style",
    "debate_segment",
    "debate_turn_severity",
    "debate_turn_category",
    "debate_turn_entirety",
    "consultancy_turn",
    "consensus_check",
    "stage3_judge",
    "debate_judge",
    "reviewer_interactive",
    "reviewer_consultancy",
    "gemba",
    "eaprompt",
];

const PACK_ASSETS: [(&str, &str); 2] = [
    ("zh-en", include_str!("../assets/packs/zh-en.json")),
    ("en-de", include_str!("../assets/packs/en-de.json")),
];

const GEMBA_PACK: &str = include_str!("../assets/packs/gemba.json");

static BUILTIN: OnceLock<Registry> = OnceLock::new();

impl Registry {
    /// The compiled-in registry. Immutable after load; shared freely.
    pub fn builtin() -> &'static Registry {
        BUILTIN.get_or_init(|| Registry::load_builtin().expect("builtin prompt assets are valid"))
    }

    fn load_builtin() -> Result<Registry, PromptError> {
        let mut templates = BTreeMap::new();
        for (name, text) in TEMPLATE_ASSETS {
            let template = parse_template(name, text)?;
            templates.insert(template.id.clone(), template);
        }
        let mut packs = BTreeMap::new();
        for (name, text) in PACK_ASSETS {
            let pack = parse_pack(name, text)?;
            packs.insert(pack.language_pair.clone(), pack);
        }
        let gemba_examples = parse_gemba_pack(GEMBA_PACK)?;
        let languages = BTreeMap::from([
            ("zh-en".to_string(), ("Chinese".to_string(), "English".to_string())),
            ("en-de".to_string(), ("English".to_string(), "German".to_string())),
            ("he-en".to_string(), ("Hebrew".to_string(), "English".to_string())),
            ("en-cs".to_string(), ("English".to_string(), "Czech".to_string())),
        ]);
        Ok(Registry { templates, packs, gemba_examples, languages })
    }

    pub fn template(&self, id: &str) -> Result<&PromptTemplate, PromptError> {
        self.templates
            .get(id)
            .ok_or_else(|| PromptError::UnknownTemplate(id.to_string()))
    }

    pub fn template_ids(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }

    /// Template id -> version, recorded in run manifests.
    pub fn template_versions(&self) -> BTreeMap<String, u32> {
        self.templates
            .iter()
            .map(|(id, t)| (id.clone(), t.version))
            .collect()
    }

    pub fn pack(&self, language_pair: &str) -> Option<&ExamplePack> {
        self.packs.get(language_pair)
    }

    pub fn gemba_examples(&self) -> &[FewShotExample] {
        &self.gemba_examples
    }

    /// Display names substituted into ##src_lng##/##tgt_lng##.
    pub fn resolve_language_names(&self, language_pair: &str) -> Result<(String, String), PromptError> {
        self.languages
            .get(language_pair)
            .cloned()
            .ok_or_else(|| PromptError::UnknownLanguagePair(language_pair.to_string()))
    }

    /// Register a user-supplied pack (language pairs beyond the
    /// shipped zh-en/en-de ones). A pack carrying display names also
    /// extends the language table.
    pub fn with_pack(mut self, pack: ExamplePack) -> Self {
        if let Some((src, tgt)) = &pack.language_names {
            self.languages
                .insert(pack.language_pair.clone(), (src.clone(), tgt.clone()));
        }
        self.packs.insert(pack.language_pair.clone(), pack);
        self
    }

    /// Extend the language-name table.
    pub fn with_language_pair(
        mut self,
        pair: impl Into<String>,
        src: impl Into<String>,
        tgt: impl Into<String>,
    ) -> Self {
        self.languages.insert(pair.into(), (src.into(), tgt.into()));
        self
    }

    /// Render a template: the system message, then one (user,
    /// assistant) pair per few-shot example, then the final user
    /// message with the real bindings.
    pub fn render(
        &self,
        template: &PromptTemplate,
        bindings: &Bindings,
        examples: Option<&[FewShotExample]>,
    ) -> Result<Vec<ChatMessage>, PromptError> {
        let examples = examples.unwrap_or(&[]);
        if !examples.is_empty() && !template.stage.allows_examples() {
            return Err(PromptError::ExamplesForbidden(
                template.id.clone(),
                template.stage.as_str().to_string(),
            ));
        }

        let mut messages = Vec::new();
        if examples.is_empty() {
            for (role, text) in &template.body {
                messages.push(ChatMessage {
                    role: *role,
                    content: substitute(text, bindings, &template.id)?,
                });
            }
            return Ok(messages);
        }

        // Few-shot rendering repeats the template's user turn per
        // example, each bound with the example's own segment pair and
        // language names.
        let user_text = template
            .body
            .iter()
            .find(|(role, _)| *role == Role::User)
            .map(|(_, text)| text)
            .ok_or_else(|| PromptError::NoUserTurn(template.id.clone()))?;

        for (role, text) in template.body.iter().filter(|(r, _)| *r == Role::System) {
            debug_assert_eq!(*role, Role::System);
            messages.push(ChatMessage::system(substitute(text, bindings, &template.id)?));
        }
        for example in examples {
            let mut example_bindings = bindings.clone();
            let (src, tgt) = self.resolve_language_names(&example.language_pair)?;
            example_bindings.insert("src_lng".into(), src);
            example_bindings.insert("tgt_lng".into(), tgt);
            example_bindings.insert("source_segment".into(), example.source.clone());
            example_bindings.insert("target_segment".into(), example.translation.clone());
            messages.push(ChatMessage::user(substitute(
                user_text,
                &example_bindings,
                &template.id,
            )?));
            messages.push(ChatMessage::assistant(example.annotations_payload.clone()));
        }
        messages.push(ChatMessage::user(substitute(user_text, bindings, &template.id)?));
        Ok(messages)
    }
}

/// Replace every ##name## occurrence; any survivor is an error naming
/// the placeholder.
fn substitute(text: &str, bindings: &Bindings, template_id: &str) -> Result<String, PromptError> {
    let mut out = text.to_string();
    for (key, value) in bindings {
        out = out.replace(&format!("##{key}##"), value);
    }
    if let Some(name) = find_placeholder(&out) {
        return Err(PromptError::UnboundPlaceholder(name, template_id.to_string()));
    }
    Ok(out)
}

fn find_placeholder(text: &str) -> Option<String> {
    let start = text.find("##")?;
    let rest = &text[start + 2..];
    let end = rest.find("##")?;
    let name = &rest[..end];
    if !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        Some(name.to_string())
    } else {
        // Not a placeholder (e.g. markdown); look past it.
        find_placeholder(&rest[end..])
    }
}

// ---------------------------------------------------------------------------
// Asset parsing
// ---------------------------------------------------------------------------

fn parse_template(asset: &str, text: &str) -> Result<PromptTemplate, PromptError> {
    let bad = |detail: &str| PromptError::BadAsset(asset.to_string(), detail.to_string());
    let mut lines = text.lines();
    if lines.next() != Some("---") {
        return Err(bad("missing front-matter opener"));
    }

    let mut meta: HashMap<String, String> = HashMap::new();
    for line in lines.by_ref() {
        if line == "---" {
            break;
        }
        let (key, value) = line
            .split_once(':')
            .ok_or_else(|| bad(&format!("bad front-matter line {line:?}")))?;
        meta.insert(key.trim().to_string(), value.trim().to_string());
    }

    let id = meta.get("id").cloned().ok_or_else(|| bad("missing id"))?;
    let stage = meta
        .get("stage")
        .and_then(|s| Stage::parse(s))
        .ok_or_else(|| bad("missing or unknown stage"))?;
    let dimension = match meta.get("dimension") {
        None => None,
        Some(d) => Some(d.parse::<Dimension>().map_err(|e| bad(&e))?),
    };
    let version = meta
        .get("version")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| bad("missing or bad version"))?;
    let placeholders: Vec<String> = meta
        .get("placeholders")
        .map(|p| {
            p.split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect()
        })
        .unwrap_or_default();

    let mut body: Vec<(Role, String)> = Vec::new();
    let mut current: Option<(Role, Vec<&str>)> = None;
    for line in lines {
        let role = match line.trim() {
            "[system]" => Some(Role::System),
            "[user]" => Some(Role::User),
            "[assistant]" => Some(Role::Assistant),
            _ => None,
        };
        match role {
            Some(role) => {
                if let Some((prev, content)) = current.take() {
                    body.push((prev, content.join("\n")));
                }
                current = Some((role, Vec::new()));
            }
            None => match &mut current {
                Some((_, content)) => content.push(line),
                None if line.trim().is_empty() => {}
                None => return Err(bad("body text before the first role marker")),
            },
        }
    }
    if let Some((role, content)) = current {
        body.push((role, content.join("\n")));
    }
    if body.is_empty() {
        return Err(bad("empty body"));
    }

    // Every placeholder in the body must be declared, and vice versa.
    let body_text: String = body.iter().map(|(_, t)| t.as_str()).collect();
    for declared in &placeholders {
        if !body_text.contains(&format!("##{declared}##")) {
            return Err(bad(&format!("declared placeholder {declared:?} unused")));
        }
    }
    let mut scan = body_text.as_str();
    while let Some(name) = find_placeholder(scan) {
        if !placeholders.contains(&name) {
            return Err(bad(&format!("undeclared placeholder {name:?}")));
        }
        let token = format!("##{name}##");
        let pos = scan.find(&token).expect("placeholder just found");
        scan = &scan[pos + token.len()..];
    }

    Ok(PromptTemplate { id, stage, dimension, version, body, placeholders })
}

#[derive(Deserialize)]
struct PackFile {
    language_pair: String,
    #[serde(default)]
    source_language: Option<String>,
    #[serde(default)]
    target_language: Option<String>,
    dimensions: BTreeMap<String, Vec<FewShotExample>>,
}

fn parse_pack(asset: &str, text: &str) -> Result<ExamplePack, PromptError> {
    let bad = |detail: String| PromptError::BadAsset(asset.to_string(), detail);
    let file: PackFile = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
    let mut examples = BTreeMap::new();
    for (dim_name, mut shots) in file.dimensions {
        let dim: Dimension = dim_name.parse().map_err(bad)?;
        for shot in &mut shots {
            shot.language_pair = file.language_pair.clone();
            shot.dimension = Some(dim);
            // Shipped payloads must round-trip through the codec.
            codec::extract_annotations(&shot.annotations_payload)
                .map_err(|e| bad(format!("bad payload in {dim_name} example: {e}")))?;
        }
        examples.insert(dim, shots);
    }
    let language_names = match (file.source_language, file.target_language) {
        (Some(src), Some(tgt)) => Some((src, tgt)),
        _ => None,
    };
    Ok(ExamplePack { language_pair: file.language_pair, language_names, examples })
}

/// Parse a pack from raw JSON (user-supplied packs over the wire).
pub fn parse_pack_str(name: &str, text: &str) -> Result<ExamplePack, PromptError> {
    parse_pack(name, text)
}

#[derive(Deserialize)]
struct GembaPackFile {
    examples: Vec<FewShotExample>,
}

fn parse_gemba_pack(text: &str) -> Result<Vec<FewShotExample>, PromptError> {
    let bad = |detail: String| PromptError::BadAsset("gemba".to_string(), detail);
    let file: GembaPackFile = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
    for shot in &file.examples {
        codec::parse_gemba_sections(&shot.annotations_payload)
            .map_err(|e| bad(format!("bad sectioned payload: {e}")))?;
    }
    Ok(file.examples)
}

/// Load a user-supplied pack file (same JSON shape as the shipped packs).
pub fn load_pack_file(path: &std::path::Path) -> Result<ExamplePack, PromptError> {
    let name = path.display().to_string();
    let text = std::fs::read_to_string(path)
        .map_err(|e| PromptError::BadAsset(name.clone(), e.to_string()))?;
    parse_pack(&name, &text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn segment_bindings(reg: &Registry, lp: &str, source: &str, target: &str) -> Bindings {
        let (src, tgt) = reg.resolve_language_names(lp).unwrap();
        Bindings::from([
            ("src_lng".to_string(), src),
            ("tgt_lng".to_string(), tgt),
            ("source_segment".to_string(), source.to_string()),
            ("target_segment".to_string(), target.to_string()),
        ])
    }

    #[test]
    fn builtin_loads_and_ships_expected_templates() {
        let reg = Registry::builtin();
        for id in [
            "stage1_accuracy",
            "debate_turn_severity",
            "consensus_check",
            "stage3_judge",
            "gemba",
            "eaprompt",
        ] {
            assert!(reg.template(id).is_ok(), "missing template {id}");
        }
        assert_eq!(reg.pack("zh-en").unwrap().examples.len(), 4);
        assert_eq!(reg.pack("en-de").unwrap().examples.len(), 4);
        for pack in [reg.pack("zh-en").unwrap(), reg.pack("en-de").unwrap()] {
            for shots in pack.examples.values() {
                assert_eq!(shots.len(), 4, "packs ship exactly 4 shots per dimension");
            }
        }
        assert_eq!(reg.gemba_examples().len(), 3);
    }

    #[test]
    fn stage1_render_is_ten_messages_with_four_shots() {
        let reg = Registry::builtin();
        let template = reg.template("stage1_accuracy").unwrap();
        let bindings = segment_bindings(reg, "zh-en", "学习", "study hard");
        let pack = reg.pack("zh-en").unwrap();
        let examples = pack.for_dimension(Dimension::Accuracy, 4);
        let messages = reg.render(template, &bindings, Some(examples)).unwrap();
        assert_eq!(messages.len(), 10);
        assert_eq!(messages[0].role, Role::System);
        let last = messages.last().unwrap();
        assert_eq!(last.role, Role::User);
        assert!(last
            .content
            .contains("You are an accuracy errors detection expert"));
        assert!(last.content.contains("Chinese source:\n学习"));
        assert!(messages[2].content.contains("Factory direct production"));
    }

    #[test]
    fn missing_binding_is_named_in_the_error() {
        let reg = Registry::builtin();
        let template = reg.template("stage1_accuracy").unwrap();
        let mut bindings = segment_bindings(reg, "zh-en", "x", "y");
        bindings.remove("target_segment");
        match reg.render(template, &bindings, None) {
            Err(PromptError::UnboundPlaceholder(name, _)) => {
                assert_eq!(name, "target_segment")
            }
            other => panic!("expected unbound placeholder, got {other:?}"),
        }
    }

    #[test]
    fn gemba_render_is_eight_messages_with_three_shots() {
        let reg = Registry::builtin();
        let template = reg.template("gemba").unwrap();
        let bindings = segment_bindings(reg, "zh-en", "源", "target");
        let messages = reg
            .render(template, &bindings, Some(reg.gemba_examples()))
            .unwrap();
        assert_eq!(messages.len(), 8);
        assert!(messages[0]
            .content
            .starts_with("You are an annotator for the quality of machine translation"));
        // The example turns carry their own language names.
        assert!(messages[1].content.contains("English source:"));
        assert!(messages[3].content.contains("Czech translation:"));
    }

    #[test]
    fn resolve_language_names_table() {
        let reg = Registry::builtin();
        assert_eq!(
            reg.resolve_language_names("zh-en").unwrap(),
            ("Chinese".to_string(), "English".to_string())
        );
        assert_eq!(
            reg.resolve_language_names("en-de").unwrap(),
            ("English".to_string(), "German".to_string())
        );
        assert!(matches!(
            reg.resolve_language_names("xx-yy"),
            Err(PromptError::UnknownLanguagePair(_))
        ));
    }

    #[test]
    fn examples_are_rejected_for_single_call_stages() {
        let reg = Registry::builtin();
        let template = reg.template("consensus_check").unwrap();
        let bindings = Bindings::from([
            ("first_annotations".to_string(), "{}".to_string()),
            ("second_annotations".to_string(), "{}".to_string()),
        ]);
        let example = reg.pack("zh-en").unwrap().for_dimension(Dimension::Accuracy, 1);
        assert!(matches!(
            reg.render(template, &bindings, Some(example)),
            Err(PromptError::ExamplesForbidden(..))
        ));
    }

    #[test]
    fn rendering_is_pure() {
        let reg = Registry::builtin();
        let template = reg.template("eaprompt").unwrap();
        let bindings = Bindings::from([
            ("source_segment".to_string(), "a".to_string()),
            ("target_segment".to_string(), "b".to_string()),
        ]);
        let once = reg.render(template, &bindings, None).unwrap();
        let twice = reg.render(template, &bindings, None).unwrap();
        assert_eq!(once, twice);
        assert_eq!(once.len(), 2);
        assert!(once[0].content.contains("Deduct 5 points for each major error"));
    }
}
