//! The statistics commands: meta-eval, span-eval, and report. Thin
//! wrappers over the service endpoints; file parsing stays local.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Context;

use mmad_core::dataio::{
    self, load_gold_annotations, load_scores, AnnotationRecord, ScoreRow, GOLD_HEADER,
    SCORES_HEADER,
};
use mmad_core::meta::MetaReport;
use mmad_core::mqm::{ErrorAnnotation, ScoreWeights, UnitKey};
use mmad_core::proto::{MetaEvalRequest, SpanEvalPair, SpanEvalRequest};

use crate::config::{pick_opt, pick_path, require, FileConfig};
use crate::run::connect;
use crate::{MetaEvalArgs, ReportArgs, SpanEvalArgs};

fn first_line(path: &Path) -> anyhow::Result<String> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    Ok(text.lines().next().unwrap_or_default().to_string())
}

/// Accept either a scores table or a gold annotations table; gold
/// annotations are scored with the default weights (negative-oriented).
fn load_scores_flexible(path: &Path) -> anyhow::Result<Vec<ScoreRow>> {
    match first_line(path)?.as_str() {
        SCORES_HEADER => Ok(load_scores(path)?),
        GOLD_HEADER => {
            let (gold, warnings) = load_gold_annotations(path)?;
            for warning in warnings {
                eprintln!("gold: {warning}");
            }
            Ok(dataio::gold_scores(&gold, &ScoreWeights::default()))
        }
        other => anyhow::bail!(
            "{}: unrecognized header {other:?} (expected a scores or gold table)",
            path.display()
        ),
    }
}

fn filter_rows(rows: Vec<ScoreRow>, lang_pair: Option<&str>) -> Vec<ScoreRow> {
    match lang_pair {
        Some(lp) => rows.into_iter().filter(|r| r.lp == lp).collect(),
        None => rows,
    }
}

fn print_meta_report(report: &MetaReport) {
    let fmt = |v: Option<f64>| match v {
        Some(x) => format!("{x:.4}"),
        None => "n/a".to_string(),
    };
    println!("== {} ==", report.label);
    println!(
        "  systems: {}  segments: {}  pairs: {}",
        report.systems, report.segments, report.pairs
    );
    println!("  sys_pairwise_acc: {}", fmt(report.sys_pairwise_acc));
    println!("  sys_pearson:      {}", fmt(report.sys_pearson));
    println!(
        "  seg_acc_t:        {}  (epsilon {})",
        fmt(report.seg_acc_t),
        fmt(report.seg_acc_t_epsilon)
    );
    println!("  seg_pearson:      {}", fmt(report.seg_pearson));
    println!("  meta:             {}", fmt(report.meta));
    for note in &report.notes {
        println!("  note: {note}");
    }
}

pub async fn cmd_meta_eval(args: &MetaEvalArgs) -> anyhow::Result<i32> {
    let config = FileConfig::load(args.config.as_deref())?;
    let scores_path = require(pick_path(&args.scores, &config, "scores"), "--scores");
    let gold_path = require(pick_path(&args.gold, &config, "gold"), "--gold");
    let lang_pair = pick_opt(&args.lang_pair, &config, "lang-pair");
    let epsilon = pick_opt(&args.epsilon, &config, "epsilon");
    let pool = args.pool || config.get("pool").is_some_and(|v| v == "true");

    let metric = filter_rows(load_scores(&scores_path)?, lang_pair.as_deref());
    let gold = filter_rows(load_scores_flexible(&gold_path)?, lang_pair.as_deref());
    let segments = dataio::join_scores(&metric, &gold)?;
    if segments.is_empty() {
        anyhow::bail!("no scored segments after filtering");
    }

    let connection = connect(pick_opt(&args.server, &config, "server").as_deref()).await?;
    let response = connection
        .client
        .meta_eval(&MetaEvalRequest { segments, epsilon, pool })
        .await?;

    for report in &response.reports {
        print_meta_report(report);
    }
    if let Some(out) = pick_path(&args.out, &config, "out") {
        let path = out.join("meta_report.json");
        dataio::write_atomic(
            &path,
            serde_json::to_string_pretty(&response.reports)?.as_bytes(),
        )?;
        println!("wrote {}", path.display());
    }
    Ok(0)
}

fn load_annotation_sets(path: &Path) -> anyhow::Result<BTreeMap<UnitKey, Vec<ErrorAnnotation>>> {
    let header = first_line(path)?;
    let mut sets: BTreeMap<UnitKey, Vec<ErrorAnnotation>> = BTreeMap::new();
    if header == GOLD_HEADER {
        let (gold, warnings) = load_gold_annotations(path)?;
        for warning in warnings {
            eprintln!("gold: {warning}");
        }
        for (key, set) in gold {
            sets.insert(key, set.annotations);
        }
        return Ok(sets);
    }
    // Otherwise annotations.jsonl.
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: AnnotationRecord = serde_json::from_str(line)
            .with_context(|| format!("{}:{}", path.display(), idx + 1))?;
        let key = UnitKey {
            language_pair: record.lp,
            system_id: record.system,
            doc_id: record.doc,
            seg_id: record.seg_id,
        };
        sets.entry(key).or_default().extend(record.annotations);
    }
    Ok(sets)
}

pub async fn cmd_span_eval(args: &SpanEvalArgs) -> anyhow::Result<i32> {
    let config = FileConfig::load(args.config.as_deref())?;
    let pred_path = require(pick_path(&args.pred, &config, "pred"), "--pred");
    let gold_path = require(pick_path(&args.gold, &config, "gold"), "--gold");
    let lang_pair = pick_opt(&args.lang_pair, &config, "lang-pair");

    let filter = |mut sets: BTreeMap<UnitKey, Vec<ErrorAnnotation>>| {
        if let Some(lp) = &lang_pair {
            sets.retain(|k, _| &k.language_pair == lp);
        }
        sets
    };
    let predicted = filter(load_annotation_sets(&pred_path)?);
    let gold = filter(load_annotation_sets(&gold_path)?);

    // Union of keys; either side missing a unit contributes an empty set.
    let mut keys: Vec<UnitKey> = predicted.keys().chain(gold.keys()).cloned().collect();
    keys.sort();
    keys.dedup();
    if keys.is_empty() {
        anyhow::bail!("no units to compare");
    }
    let pairs: Vec<SpanEvalPair> = keys
        .iter()
        .map(|key| SpanEvalPair {
            predicted: predicted.get(key).cloned().unwrap_or_default(),
            gold: gold.get(key).cloned().unwrap_or_default(),
        })
        .collect();

    let connection = connect(pick_opt(&args.server, &config, "server").as_deref()).await?;
    let response = connection.client.span_eval(&SpanEvalRequest { pairs }).await?;

    println!("span matching: corpus micro-average over {} unit(s)", response.pairs);
    println!(
        "precision: {:.4}  recall: {:.4}  f1: {:.4}  (matches {}, predicted {}, gold {})",
        response.micro.precision,
        response.micro.recall,
        response.micro.f1,
        response.micro.matches,
        response.micro.predicted,
        response.micro.gold
    );
    if let Some(out) = pick_path(&args.out, &config, "out") {
        let path = out.join("span_report.json");
        dataio::write_atomic(&path, serde_json::to_string_pretty(&response)?.as_bytes())?;
        println!("wrote {}", path.display());
    }
    Ok(0)
}

pub async fn cmd_report(args: &ReportArgs) -> anyhow::Result<i32> {
    let config = FileConfig::load(args.config.as_deref())?;
    let scores_path = require(pick_path(&args.scores, &config, "scores"), "--scores");
    let lang_pair = pick_opt(&args.lang_pair, &config, "lang-pair");
    let rows = filter_rows(load_scores(&scores_path)?, lang_pair.as_deref());
    if rows.is_empty() {
        anyhow::bail!("no scores after filtering");
    }
    let scores: Vec<f64> = rows.iter().map(|r| r.score).collect();

    let connection = connect(pick_opt(&args.server, &config, "server").as_deref()).await?;
    let response = connection.client.report(scores).await?;
    let d = &response.distribution;
    println!("quality buckets over {} score(s):", d.total);
    println!("  HQ (score = 0):        {:>6.2}%  ({})", d.hq_pct, d.hq);
    println!("  MQ (-5 < score < 0):   {:>6.2}%  ({})", d.mq_pct, d.mq);
    println!("  LQ (score <= -5):      {:>6.2}%  ({})", d.lq_pct, d.lq);
    if let Some(out) = pick_path(&args.out, &config, "out") {
        let path = out.join("bucket_report.json");
        dataio::write_atomic(&path, serde_json::to_string_pretty(&response)?.as_bytes())?;
        println!("wrote {}", path.display());
    }
    Ok(0)
}

