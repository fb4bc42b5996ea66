//! Parsers for every model-output shape the prompts elicit:
//! JSON annotation payloads, `<score>` tags, consensus yes/no
//! verdicts, and the sectioned Critical:/Major:/Minor: format.
//!
//! All functions are pure; repair/retry policy lives in the pipeline.

use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use crate::mqm::{
    AnnotationSet, CategoryPath, ErrorAnnotation, Provenance, Severity, Span, TopCategory,
};

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("no decodable annotation payload in model output")]
    NoPayload { raw: String },
    #[error("no <score></score> tag in model output")]
    MissingScoreTag { raw: String },
    #[error("<score> tag does not contain an integer: {inner:?}")]
    BadScoreTag { inner: String },
    #[error("none of the Critical:/Major:/Minor: section headers found")]
    NoSections { raw: String },
}

/// A decoded annotation payload plus everything soft that happened
/// while decoding it.
#[derive(Debug, Clone)]
pub struct ParsedAnnotations {
    pub set: AnnotationSet,
    pub warnings: Vec<String>,
    /// Free-text "analysis" field, persisted verbatim, never interpreted.
    pub analysis: Option<String>,
}

// ---------------------------------------------------------------------------
// JSON annotation payloads
// ---------------------------------------------------------------------------

/// Locate the last well-formed annotation payload in `text`: fenced
/// code blocks are tried first, then outermost brace-balanced
/// objects. `{"annotations": []}` decodes to the empty set.
pub fn extract_annotations(text: &str) -> Result<ParsedAnnotations, ParseError> {
    for block in fenced_blocks(text).into_iter().rev() {
        for candidate in balanced_objects(block).into_iter().rev() {
            if let Some(parsed) = try_decode_payload(candidate) {
                return Ok(parsed);
            }
        }
    }
    for candidate in balanced_objects(text).into_iter().rev() {
        if let Some(parsed) = try_decode_payload(candidate) {
            return Ok(parsed);
        }
    }
    Err(ParseError::NoPayload { raw: text.to_string() })
}

fn try_decode_payload(candidate: &str) -> Option<ParsedAnnotations> {
    let value: Value = serde_json::from_str(candidate).ok()?;
    let obj = value.as_object()?;
    let entries: Vec<&Value> = match obj.get("annotations")? {
        Value::Array(items) => items.iter().collect(),
        // Tolerates the single-object shape some prompts sketch.
        v @ Value::Object(_) => vec![v],
        _ => return None,
    };
    let mut warnings = Vec::new();
    let mut annotations = Vec::new();
    for entry in entries {
        if let Some(ann) = decode_entry(entry, &mut warnings) {
            annotations.push(ann);
        }
    }
    let analysis = obj
        .get("analysis")
        .map(|v| match v {
            Value::String(s) => s.clone(),
            other => other.to_string(),
        })
        .filter(|s| !s.is_empty());
    let (set, mut norm_warnings) = AnnotationSet::new_normalized(annotations, Provenance::Stage1);
    warnings.append(&mut norm_warnings);
    Some(ParsedAnnotations { set, warnings, analysis })
}

fn decode_entry(entry: &Value, warnings: &mut Vec<String>) -> Option<ErrorAnnotation> {
    let obj = match entry.as_object() {
        Some(o) => o,
        None => {
            warnings.push(format!("annotation entry is not an object: {entry}"));
            return None;
        }
    };
    let span_raw = match obj.get("error_span").and_then(Value::as_str) {
        Some(s) => s.to_string(),
        None => {
            warnings.push("annotation entry missing error_span; skipped".into());
            return None;
        }
    };
    let category_raw = match obj.get("category").and_then(Value::as_str) {
        Some(s) => s,
        None => {
            warnings.push(format!("annotation entry missing category (span {span_raw:?}); skipped"));
            return None;
        }
    };
    let (category, mut cat_warnings) = CategoryPath::parse_lenient(category_raw);
    warnings.append(&mut cat_warnings);

    let severity = match obj.get("severity").and_then(Value::as_str) {
        Some(s) => match s.trim().to_ascii_lowercase().as_str() {
            "major" => Severity::Major,
            "minor" => Severity::Minor,
            "critical" => Severity::Major,
            other => {
                warnings.push(format!("unknown severity {other:?}; treated as minor"));
                Severity::Minor
            }
        },
        None => {
            warnings.push(format!("severity missing for span {span_raw:?}; treated as minor"));
            Severity::Minor
        }
    };

    let is_source_error = match obj.get("is_source_error") {
        None => false,
        Some(Value::Bool(b)) => *b,
        Some(Value::String(s)) => matches!(s.trim().to_ascii_lowercase().as_str(), "yes" | "true"),
        Some(other) => {
            warnings.push(format!("unreadable is_source_error {other}; treated as no"));
            false
        }
    };

    let span = if category.top == TopCategory::NonTranslation {
        if !span_raw.trim().eq_ignore_ascii_case("all") {
            warnings.push(format!(
                "non-translation span {span_raw:?} forced to the whole segment"
            ));
        }
        Span::All
    } else {
        Span::Text(span_raw)
    };

    Some(ErrorAnnotation {
        span,
        category,
        severity,
        is_source_error,
        dimension_origin: None,
    })
}

/// Contents of every ``` fence in order; an unclosed fence yields the
/// remainder of the text (debate prompts show the payload fence
/// without requiring a closing fence).
fn fenced_blocks(text: &str) -> Vec<&str> {
    let mut blocks = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find("```") {
        let after = &rest[open + 3..];
        // Skip an optional language tag up to end of line.
        let content_start = match after.find('\n') {
            Some(nl) if after[..nl].trim().chars().all(|c| c.is_ascii_alphanumeric()) => nl + 1,
            _ => 0,
        };
        let content = &after[content_start..];
        match content.find("```") {
            Some(close) => {
                blocks.push(&content[..close]);
                rest = &content[close + 3..];
            }
            None => {
                blocks.push(content);
                break;
            }
        }
    }
    blocks
}

/// Top-level brace-balanced `{...}` slices, string-literal aware.
fn balanced_objects(text: &str) -> Vec<&str> {
    let bytes = text.as_bytes();
    let mut objects = Vec::new();
    let mut depth = 0usize;
    let mut start = 0usize;
    let mut in_string = false;
    let mut escape = false;
    for (i, &b) in bytes.iter().enumerate() {
        if in_string {
            if escape {
                escape = false;
            } else if b == b'\\' {
                escape = true;
            } else if b == b'"' {
                in_string = false;
            }
            continue;
        }
        match b {
            b'"' if depth > 0 => in_string = true,
            b'{' => {
                if depth == 0 {
                    start = i;
                }
                depth += 1;
            }
            b'}' if depth > 0 => {
                depth -= 1;
                if depth == 0 {
                    objects.push(&text[start..=i]);
                }
            }
            _ => {}
        }
    }
    objects
}

// ---------------------------------------------------------------------------
// Payload encoding (seeds, checker inputs, judge bindings)
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct PayloadAnnotation<'a> {
    error_span: &'a str,
    category: String,
    severity: &'a str,
    is_source_error: &'a str,
}

#[derive(Serialize)]
struct Payload<'a> {
    annotations: Vec<PayloadAnnotation<'a>>,
}

/// Encode a set in the JSON shape the prompts show. Re-parsing the
/// result yields an equal set.
pub fn encode_annotations(set: &AnnotationSet) -> String {
    let payload = Payload {
        annotations: set
            .annotations
            .iter()
            .map(|a| PayloadAnnotation {
                error_span: a.span.as_payload_str(),
                category: a.category.to_string(),
                severity: a.severity.as_str(),
                is_source_error: if a.is_source_error { "yes" } else { "no" },
            })
            .collect(),
    };
    serde_json::to_string(&payload).expect("payload serialization cannot fail")
}

// ---------------------------------------------------------------------------
// <score> tags
// ---------------------------------------------------------------------------

/// Integer inside the last `<score>...</score>` pair.
pub fn extract_score_tag(text: &str) -> Result<i64, ParseError> {
    let open = text.rfind("<score>").ok_or_else(|| ParseError::MissingScoreTag {
        raw: text.to_string(),
    })?;
    let after = &text[open + "<score>".len()..];
    let close = after.find("</score>").ok_or_else(|| ParseError::MissingScoreTag {
        raw: text.to_string(),
    })?;
    let inner = after[..close].trim();
    inner
        .parse::<i64>()
        .map_err(|_| ParseError::BadScoreTag { inner: inner.to_string() })
}

// ---------------------------------------------------------------------------
// Consensus verdicts
// ---------------------------------------------------------------------------

/// Case-insensitive scan: an isolated "yes" is true, an isolated "no"
/// is false; both or neither present falls back to false so an
/// unconfirmed debate never silently terminates.
pub fn extract_yes_no(text: &str) -> bool {
    let mut has_yes = false;
    let mut has_no = false;
    for word in text.split(|c: char| !c.is_alphanumeric()) {
        match word.to_ascii_lowercase().as_str() {
            "yes" => has_yes = true,
            "no" => has_no = true,
            _ => {}
        }
    }
    has_yes && !has_no
}

// ---------------------------------------------------------------------------
// Sectioned Critical:/Major:/Minor: format
// ---------------------------------------------------------------------------

/// Parse the sectioned format. Each entry line yields a category plus
/// a quoted span; "no-error" lines yield nothing; critical maps to
/// major; a "non-translation" line yields the whole-segment annotation.
pub fn parse_gemba_sections(text: &str) -> Result<ParsedAnnotations, ParseError> {
    let mut severity: Option<Severity> = None;
    let mut saw_header = false;
    let mut warnings = Vec::new();
    let mut annotations = Vec::new();

    for raw_line in text.lines() {
        let line = raw_line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some((sev, rest)) = section_header(line) {
            saw_header = true;
            severity = Some(sev);
            if !rest.is_empty() {
                parse_section_line(rest, sev, &mut annotations, &mut warnings);
            }
            continue;
        }
        if let Some(sev) = severity {
            parse_section_line(line, sev, &mut annotations, &mut warnings);
        }
    }

    if !saw_header {
        return Err(ParseError::NoSections { raw: text.to_string() });
    }
    let (set, mut norm_warnings) = AnnotationSet::new_normalized(annotations, Provenance::Gemba);
    warnings.append(&mut norm_warnings);
    Ok(ParsedAnnotations { set, warnings, analysis: None })
}

fn section_header(line: &str) -> Option<(Severity, &str)> {
    let lower = line.to_ascii_lowercase();
    for (name, sev) in [
        ("critical:", Severity::Major),
        ("major:", Severity::Major),
        ("minor:", Severity::Minor),
    ] {
        if lower.starts_with(name) {
            return Some((sev, line[name.len()..].trim()));
        }
    }
    None
}

fn parse_section_line(
    line: &str,
    severity: Severity,
    annotations: &mut Vec<ErrorAnnotation>,
    warnings: &mut Vec<String>,
) {
    let lower = line.to_ascii_lowercase();
    if lower == "no-error" || lower == "no error" || lower == "none" {
        return;
    }
    if lower.starts_with("non-translation") {
        let mut ann = ErrorAnnotation::non_translation();
        ann.severity = severity;
        annotations.push(ann);
        return;
    }
    let spans = quoted_spans(line);
    let category_text = match line.find(['"', '\u{201c}']) {
        Some(pos) => line[..pos].trim_end_matches([' ', '-', '\u{2013}', '\u{2014}']),
        None => match line.split_once(" - ") {
            Some((cat, _)) => cat,
            None => {
                warnings.push(format!("unparseable annotation line {line:?}; skipped"));
                return;
            }
        },
    };
    let (category, mut cat_warnings) = CategoryPath::parse_lenient(category_text);
    warnings.append(&mut cat_warnings);
    if spans.is_empty() {
        // `category - span` without quotes: keep the right-hand side.
        if let Some((_, span)) = line.split_once(" - ") {
            let span = span.trim().trim_matches(['"', '\u{201c}', '\u{201d}']);
            if !span.is_empty() {
                annotations.push(ErrorAnnotation::new(
                    Span::Text(span.to_string()),
                    category,
                    severity,
                ));
                return;
            }
        }
        warnings.push(format!("no span found in annotation line {line:?}; skipped"));
        return;
    }
    for span in spans {
        annotations.push(ErrorAnnotation::new(Span::Text(span), category, severity));
    }
}

/// All `"..."` / curly-quoted substrings of a line, in order.
fn quoted_spans(line: &str) -> Vec<String> {
    let mut spans = Vec::new();
    let mut chars = line.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        let close = match c {
            '"' => '"',
            '\u{201c}' => '\u{201d}',
            _ => continue,
        };
        let start = i + c.len_utf8();
        let mut end = None;
        for (j, d) in chars.by_ref() {
            if d == close {
                end = Some(j);
                break;
            }
        }
        match end {
            Some(j) => spans.push(line[start..j].to_string()),
            None => break,
        }
    }
    spans
}

// ---------------------------------------------------------------------------
// Major/Minor bullet lists (error-count prompt output)
// ---------------------------------------------------------------------------

/// Parse `Major errors:` / `Minor errors:` bullet lists: spans come
/// from quoted text, categories from the trailing dash label where
/// present, else `other`.
pub fn parse_eaprompt_lists(text: &str) -> Result<ParsedAnnotations, ParseError> {
    let mut severity: Option<Severity> = None;
    let mut saw_header = false;
    let mut warnings = Vec::new();
    let mut annotations = Vec::new();

    for raw_line in text.lines() {
        let line = raw_line.trim();
        if line.is_empty() {
            continue;
        }
        let lower = line.to_ascii_lowercase();
        if lower.starts_with("major errors:") || lower.starts_with("major:") {
            saw_header = true;
            severity = Some(Severity::Major);
            continue;
        }
        if lower.starts_with("minor errors:") || lower.starts_with("minor:") {
            saw_header = true;
            severity = Some(Severity::Minor);
            continue;
        }
        // The score line ends the lists.
        if lower.contains("<score>") || lower.starts_with("based on the above") {
            severity = None;
            continue;
        }
        let Some(sev) = severity else { continue };
        if lower.contains("no error") || lower == "none" {
            continue;
        }
        let spans = quoted_spans(line);
        if spans.is_empty() {
            continue;
        }
        let category = trailing_label(line)
            .map(label_to_category)
            .unwrap_or_else(|| CategoryPath::top_only(TopCategory::Other));
        for span in spans {
            annotations.push(ErrorAnnotation::new(Span::Text(span), category, sev));
        }
    }

    if !saw_header {
        return Err(ParseError::NoSections { raw: text.to_string() });
    }
    let (set, mut norm_warnings) = AnnotationSet::new_normalized(annotations, Provenance::Eaprompt);
    warnings.append(&mut norm_warnings);
    Ok(ParsedAnnotations { set, warnings, analysis: None })
}

/// Label after the last dash that follows the last quote, if any.
fn trailing_label(line: &str) -> Option<&str> {
    let last_quote = line.rfind(['"', '\u{201d}'])?;
    let tail = &line[last_quote + line[last_quote..].chars().next()?.len_utf8()..];
    let dash = tail.find(['-', '\u{2013}', '\u{2014}'])?;
    let label_start = dash + tail[dash..].chars().next()?.len_utf8();
    let label = tail[label_start..].trim().trim_end_matches('.');
    if label.is_empty() {
        None
    } else {
        Some(label)
    }
}

fn label_to_category(label: &str) -> CategoryPath {
    use crate::mqm::SubCategory::*;
    if label.contains('/') {
        return CategoryPath::parse_lenient(label).0;
    }
    let l = label.to_ascii_lowercase();
    let pair = |top, sub| CategoryPath::new(top, Some(sub));
    if l.contains("non-translation") {
        CategoryPath::top_only(TopCategory::NonTranslation)
    } else if l.contains("mistranslation") {
        pair(TopCategory::Accuracy, Mistranslation)
    } else if l.contains("untranslated") {
        pair(TopCategory::Accuracy, UntranslatedText)
    } else if l.contains("omission") {
        pair(TopCategory::Accuracy, Omission)
    } else if l.contains("addition") {
        pair(TopCategory::Accuracy, Addition)
    } else if l.contains("grammar") {
        pair(TopCategory::Fluency, Grammar)
    } else if l.contains("spelling") {
        pair(TopCategory::Fluency, Spelling)
    } else if l.contains("punctuation") {
        pair(TopCategory::Fluency, Punctuation)
    } else if l.contains("register") {
        pair(TopCategory::Fluency, Register)
    } else if l.contains("encoding") {
        pair(TopCategory::Fluency, CharacterEncoding)
    } else if l.contains("inconsistent use") {
        pair(TopCategory::Terminology, InconsistentUse)
    } else if l.contains("inconsisten") {
        pair(TopCategory::Fluency, Inconsistency)
    } else if l.contains("inappropriate") {
        pair(TopCategory::Terminology, InappropriateForContext)
    } else if l.contains("awkward") {
        pair(TopCategory::Style, Awkward)
    } else if l.contains("accuracy") {
        CategoryPath::top_only(TopCategory::Accuracy)
    } else if l.contains("fluency") {
        CategoryPath::top_only(TopCategory::Fluency)
    } else if l.contains("terminology") {
        CategoryPath::top_only(TopCategory::Terminology)
    } else if l.contains("style") {
        CategoryPath::top_only(TopCategory::Style)
    } else {
        CategoryPath::top_only(TopCategory::Other)
    }
}
