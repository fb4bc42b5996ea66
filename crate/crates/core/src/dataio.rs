//! Canonical file formats (TSV + JSONL), run outputs, and the run
//! manifest. Every writer goes through write-then-rename so a
//! concurrent reader never observes a partial file.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::gateway::{BackendConfig, ChatMessage, ScriptEntry};
use crate::meta::{score_distribution, BucketDistribution, ScoredSegment};
use crate::mqm::{
    mqm_score, AnnotationSet, CategoryPath, ErrorAnnotation, GoldAnnotations, Provenance,
    ScoreWeights, Severity, Span, TranslationUnit, UnitKey,
};
use crate::pipeline::{RunOptions, UnitEvaluation};
use crate::transcript::{CallStats, StageTag};

pub const SEGMENTS_HEADER: &str = "lp\tsystem\tdoc\tseg_id\tsource\ttarget\treference";
pub const GOLD_HEADER: &str = "lp\tsystem\tdoc\tseg_id\tcategory\tseverity\tspan";
pub const SCORES_HEADER: &str = "lp\tsystem\tseg_id\tscore";

pub const ANNOTATIONS_FILE: &str = "annotations.jsonl";
pub const SCORES_FILE: &str = "scores.tsv";
pub const TRANSCRIPTS_FILE: &str = "transcripts.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const REPORT_FILE: &str = "report.json";
pub const WARNINGS_FILE: &str = "warnings.jsonl";
pub const CACHE_DIR: &str = "cache";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}:{line}: {detail}")]
    Malformed { path: String, line: usize, detail: String },
    #[error("{path}:{line}: duplicate key {key}")]
    DuplicateKey { path: String, line: usize, key: String },
    #[error("{path}: bad header (expected {expected:?})")]
    BadHeader { path: String, expected: String },
    #[error("I/O at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {detail}")]
    BadJson { path: String, detail: String },
}

fn io_err(path: &Path, source: std::io::Error) -> DataError {
    DataError::Io { path: path.display().to_string(), source }
}

// ---------------------------------------------------------------------------
// TSV loaders
// ---------------------------------------------------------------------------

fn read_tsv(path: &Path, expected_header: &str) -> Result<Vec<(usize, Vec<String>)>, DataError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let n_cols = expected_header.split('\t').count();
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == expected_header => {}
        _ => {
            return Err(DataError::BadHeader {
                path: path.display().to_string(),
                expected: expected_header.to_string(),
            })
        }
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<String> = line.split('\t').map(str::to_string).collect();
        if fields.len() != n_cols {
            return Err(DataError::Malformed {
                path: path.display().to_string(),
                line: idx + 1,
                detail: format!("expected {n_cols} columns, got {}", fields.len()),
            });
        }
        rows.push((idx + 1, fields));
    }
    Ok(rows)
}

/// Load the segments table. Duplicate (lp, system, doc, seg) keys are
/// rejected; an empty reference column loads as absent.
pub fn load_segments(path: &Path) -> Result<Vec<TranslationUnit>, DataError> {
    let rows = read_tsv(path, SEGMENTS_HEADER)?;
    let mut units = Vec::with_capacity(rows.len());
    let mut seen: BTreeMap<UnitKey, usize> = BTreeMap::new();
    for (line, fields) in rows {
        let unit = TranslationUnit {
            language_pair: fields[0].clone(),
            system_id: fields[1].clone(),
            doc_id: fields[2].clone(),
            seg_id: fields[3].clone(),
            source_text: fields[4].clone(),
            hypothesis_text: fields[5].clone(),
            reference_text: if fields[6].is_empty() { None } else { Some(fields[6].clone()) },
        };
        if let Err(e) = unit.validate() {
            return Err(DataError::Malformed {
                path: path.display().to_string(),
                line,
                detail: e.to_string(),
            });
        }
        if seen.insert(unit.key(), line).is_some() {
            return Err(DataError::DuplicateKey {
                path: path.display().to_string(),
                line,
                key: unit.key().to_string(),
            });
        }
        units.push(unit);
    }
    Ok(units)
}

/// Load gold annotations. Severity "neutral"/"no-error" rows load as
/// no-error annotations; unknown categories degrade to other with a
/// warning. Multiple rows per unit accumulate into one set.
pub fn load_gold_annotations(path: &Path) -> Result<(GoldAnnotations, Vec<String>), DataError> {
    let rows = read_tsv(path, GOLD_HEADER)?;
    let mut gold: GoldAnnotations = BTreeMap::new();
    let mut warnings = Vec::new();
    for (line, fields) in rows {
        let key = UnitKey {
            language_pair: fields[0].clone(),
            system_id: fields[1].clone(),
            doc_id: fields[2].clone(),
            seg_id: fields[3].clone(),
        };
        let severity_raw = fields[5].trim().to_ascii_lowercase();
        let category_raw = fields[4].trim();
        let span_raw = fields[6].clone();

        let annotation = if severity_raw == "neutral"
            || severity_raw == "no-error"
            || category_raw.eq_ignore_ascii_case("no-error")
        {
            ErrorAnnotation {
                span: Span::Text(span_raw),
                category: CategoryPath::top_only(crate::mqm::TopCategory::NoError),
                severity: Severity::Minor,
                is_source_error: false,
                dimension_origin: None,
            }
        } else {
            let severity = match severity_raw.as_str() {
                "major" | "critical" => Severity::Major,
                "minor" => Severity::Minor,
                other => {
                    return Err(DataError::Malformed {
                        path: path.display().to_string(),
                        line,
                        detail: format!("unknown severity {other:?}"),
                    })
                }
            };
            let (category, cat_warnings) = CategoryPath::parse_lenient(category_raw);
            for w in cat_warnings {
                warnings.push(format!("{}:{line}: {w}", path.display()));
            }
            let span = if category.top == crate::mqm::TopCategory::NonTranslation {
                Span::All
            } else {
                Span::Text(span_raw)
            };
            ErrorAnnotation {
                span,
                category,
                severity,
                is_source_error: category.top == crate::mqm::TopCategory::SourceError,
                dimension_origin: None,
            }
        };

        gold.entry(key.clone())
            .or_insert_with(|| {
                let mut set = AnnotationSet::empty(Provenance::Gold);
                set.unit_key = Some(key);
                set
            })
            .annotations
            .push(annotation);
    }
    Ok((gold, warnings))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub lp: String,
    pub system: String,
    pub seg_id: String,
    pub score: f64,
}

/// Load a scores table.
pub fn load_scores(path: &Path) -> Result<Vec<ScoreRow>, DataError> {
    let rows = read_tsv(path, SCORES_HEADER)?;
    let mut scores = Vec::with_capacity(rows.len());
    for (line, fields) in rows {
        let score: f64 = fields[3].parse().map_err(|_| DataError::Malformed {
            path: path.display().to_string(),
            line,
            detail: format!("bad score {:?}", fields[3]),
        })?;
        scores.push(ScoreRow {
            lp: fields[0].clone(),
            system: fields[1].clone(),
            seg_id: fields[2].clone(),
            score,
        });
    }
    Ok(scores)
}

/// Gold scores derived from gold annotations, negative-oriented.
pub fn gold_scores(gold: &GoldAnnotations, weights: &ScoreWeights) -> Vec<ScoreRow> {
    gold.iter()
        .map(|(key, set)| ScoreRow {
            lp: key.language_pair.clone(),
            system: key.system_id.clone(),
            seg_id: key.seg_id.clone(),
            score: mqm_score(set, weights),
        })
        .collect()
}

/// Join metric and gold score rows on (lp, system, seg_id). Keys
/// present on one side only are an error listing the missing keys.
pub fn join_scores(
    metric: &[ScoreRow],
    gold: &[ScoreRow],
) -> Result<Vec<ScoredSegment>, DataError> {
    let key = |r: &ScoreRow| (r.lp.clone(), r.system.clone(), r.seg_id.clone());
    let gold_map: BTreeMap<_, f64> = gold.iter().map(|r| (key(r), r.score)).collect();
    let metric_keys: std::collections::BTreeSet<_> = metric.iter().map(key).collect();
    let mut missing: Vec<String> = Vec::new();
    for r in metric {
        if !gold_map.contains_key(&key(r)) {
            missing.push(format!("gold missing {}/{}/{}", r.lp, r.system, r.seg_id));
        }
    }
    for r in gold {
        if !metric_keys.contains(&key(r)) {
            missing.push(format!("metric missing {}/{}/{}", r.lp, r.system, r.seg_id));
        }
    }
    if !missing.is_empty() {
        missing.truncate(20);
        return Err(DataError::BadJson {
            path: "scores".to_string(),
            detail: format!("key mismatch: {}", missing.join("; ")),
        });
    }
    Ok(metric
        .iter()
        .map(|r| ScoredSegment {
            language_pair: r.lp.clone(),
            seg_id: r.seg_id.clone(),
            system_id: r.system.clone(),
            metric_score: r.score,
            gold_score: gold_map[&key(r)],
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Mock scripts
// ---------------------------------------------------------------------------

/// JSONL script: one `{"content": ...}` or `{"digest": ..., "content": ...}`
/// object per line.
pub fn load_script(path: &Path) -> Result<Vec<ScriptEntry>, DataError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut entries = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: ScriptEntry = serde_json::from_str(line).map_err(|e| DataError::Malformed {
            path: path.display().to_string(),
            line: idx + 1,
            detail: e.to_string(),
        })?;
        entries.push(entry);
    }
    Ok(entries)
}

// ---------------------------------------------------------------------------
// Run outputs
// ---------------------------------------------------------------------------

/// One line of annotations.jsonl.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub lp: String,
    pub system: String,
    pub doc: String,
    pub seg_id: String,
    pub provenance: Provenance,
    pub score: f64,
    pub annotations: Vec<ErrorAnnotation>,
}

/// One line of transcripts.jsonl.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub call_id: u64,
    pub tag: String,
    pub stage: StageTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimension: Option<crate::mqm::Dimension>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub round: Option<u32>,
    pub request_digest: String,
    pub messages: Vec<ChatMessage>,
    pub response_content: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WarningRecord {
    pub lp: String,
    pub system: String,
    pub seg_id: String,
    pub kind: String,
    pub message: String,
}

/// Resolved run configuration, embedded in the manifest. Sufficient
/// to re-execute the run against the cache with the replay backend.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: String,
    pub segments_path: String,
    pub out_dir: String,
    pub backend: BackendConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    pub options: RunOptions,
    pub concurrency: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lang_pair: Option<String>,
}

#[derive(Debug, Default, Clone, Copy, Serialize, Deserialize)]
pub struct StageCallCounts {
    pub stage1: u64,
    pub debate: u64,
    pub judge: u64,
    pub baseline: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub config: RunConfig,
    pub template_versions: BTreeMap<String, u32>,
    /// sha256 of every input file, keyed by path.
    pub dataset_digests: BTreeMap<String, String>,
    pub started_at: String,
    pub finished_at: String,
    pub units_total: usize,
    pub units_failed: usize,
    pub calls_by_stage: StageCallCounts,
    pub call_stats: CallStats,
    pub warning_count: usize,
    pub error_count: usize,
    pub anomaly_count: usize,
}

/// sha256 of a file's bytes, hex-encoded.
pub fn file_digest(path: &Path) -> Result<String, DataError> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(hex::encode(hasher.finalize()))
}

/// Write bytes to `path` atomically (same-directory temp + rename).
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), DataError> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let tmp = dir.join(format!(
        ".{}.tmp.{}",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("out"),
        std::process::id()
    ));
    {
        let mut file = std::fs::File::create(&tmp).map_err(|e| io_err(&tmp, e))?;
        file.write_all(bytes).map_err(|e| io_err(&tmp, e))?;
        file.sync_all().map_err(|e| io_err(&tmp, e))?;
    }
    std::fs::rename(&tmp, path).map_err(|e| io_err(path, e))?;
    Ok(())
}

fn format_score(score: f64) -> String {
    // f64 Display drops the trailing ".0", keeping the table clean.
    format!("{score}")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportFileBody {
    pub scored_units: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distribution: Option<BucketDistribution>,
}

#[derive(Debug, Clone, Copy)]
pub struct OutputPaths<'a> {
    pub dir: &'a Path,
}

impl OutputPaths<'_> {
    pub fn annotations(&self) -> PathBuf {
        self.dir.join(ANNOTATIONS_FILE)
    }
    pub fn scores(&self) -> PathBuf {
        self.dir.join(SCORES_FILE)
    }
    pub fn transcripts(&self) -> PathBuf {
        self.dir.join(TRANSCRIPTS_FILE)
    }
    pub fn manifest(&self) -> PathBuf {
        self.dir.join(MANIFEST_FILE)
    }
    pub fn report(&self) -> PathBuf {
        self.dir.join(REPORT_FILE)
    }
    pub fn warnings(&self) -> PathBuf {
        self.dir.join(WARNINGS_FILE)
    }
    pub fn cache(&self) -> PathBuf {
        self.dir.join(CACHE_DIR)
    }
}

/// Persist a run: annotations, scores, transcripts, bucket report,
/// warnings, and the manifest. Results are written in input order;
/// every file is written atomically.
pub fn write_outputs(
    dir: &Path,
    results: &[UnitEvaluation],
    manifest: &RunManifest,
) -> Result<(), DataError> {
    let paths = OutputPaths { dir };
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;

    let mut annotations = String::new();
    let mut scores = String::from(SCORES_HEADER);
    scores.push('\n');
    let mut transcripts = String::new();
    let mut warnings_out = String::new();
    let mut call_id: u64 = 0;
    let mut score_values = Vec::with_capacity(results.len());

    for result in results {
        let record = AnnotationRecord {
            lp: result.unit_key.language_pair.clone(),
            system: result.unit_key.system_id.clone(),
            doc: result.unit_key.doc_id.clone(),
            seg_id: result.unit_key.seg_id.clone(),
            provenance: result.provenance,
            score: result.score,
            annotations: result.annotations.annotations.clone(),
        };
        annotations.push_str(&serde_json::to_string(&record).expect("record serializes"));
        annotations.push('\n');

        scores.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            record.lp,
            record.system,
            record.seg_id,
            format_score(record.score)
        ));
        score_values.push(record.score);

        for call in &result.calls {
            call_id += 1;
            let t = TranscriptRecord {
                call_id,
                tag: call.tag.clone(),
                stage: call.stage,
                dimension: call.dimension,
                round: call.round,
                request_digest: call.request_digest.clone(),
                messages: call.messages.clone(),
                response_content: call.response_content.clone(),
            };
            transcripts.push_str(&serde_json::to_string(&t).expect("record serializes"));
            transcripts.push('\n');
        }

        for (kind, messages) in [
            ("warning", &result.warnings),
            ("error", &result.errors),
            ("anomaly", &result.anomalies),
        ] {
            for message in messages {
                let w = WarningRecord {
                    lp: record.lp.clone(),
                    system: record.system.clone(),
                    seg_id: record.seg_id.clone(),
                    kind: kind.to_string(),
                    message: message.clone(),
                };
                warnings_out.push_str(&serde_json::to_string(&w).expect("record serializes"));
                warnings_out.push('\n');
            }
        }
    }

    let report = ReportFileBody {
        scored_units: score_values.len(),
        distribution: score_distribution(&score_values).ok(),
    };

    write_atomic(&paths.annotations(), annotations.as_bytes())?;
    write_atomic(&paths.scores(), scores.as_bytes())?;
    write_atomic(&paths.transcripts(), transcripts.as_bytes())?;
    write_atomic(&paths.warnings(), warnings_out.as_bytes())?;
    write_atomic(
        &paths.report(),
        serde_json::to_string_pretty(&report).expect("report serializes").as_bytes(),
    )?;
    write_atomic(
        &paths.manifest(),
        serde_json::to_string_pretty(manifest).expect("manifest serializes").as_bytes(),
    )?;
    Ok(())
}

/// Read back the annotations and scores files.
pub fn read_outputs(dir: &Path) -> Result<(Vec<AnnotationRecord>, Vec<ScoreRow>), DataError> {
    let paths = OutputPaths { dir };
    let annotations_path = paths.annotations();
    let text = std::fs::read_to_string(&annotations_path).map_err(|e| io_err(&annotations_path, e))?;
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: AnnotationRecord =
            serde_json::from_str(line).map_err(|e| DataError::Malformed {
                path: annotations_path.display().to_string(),
                line: idx + 1,
                detail: e.to_string(),
            })?;
        records.push(record);
    }
    let scores = load_scores(&paths.scores())?;
    Ok((records, scores))
}

pub fn read_manifest(path: &Path) -> Result<RunManifest, DataError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| DataError::BadJson {
        path: path.display().to_string(),
        detail: e.to_string(),
    })
}

/// Stage-wise call tallies across a run's results.
pub fn tally_stages(results: &[UnitEvaluation]) -> StageCallCounts {
    let mut counts = StageCallCounts::default();
    for result in results {
        for call in &result.calls {
            match call.stage {
                StageTag::Stage1 => counts.stage1 += 1,
                StageTag::Debate => counts.debate += 1,
                StageTag::Judge => counts.judge += 1,
                StageTag::Baseline => counts.baseline += 1,
            }
        }
    }
    counts
}
