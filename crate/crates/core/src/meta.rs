//! Meta-evaluation statistics: system-level pairwise accuracy and
//! Pearson, tie-calibrated segment-level accuracy, the equal-weight
//! meta score, span precision/recall/F1, and quality-bucket
//! distributions. All functions are pure.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mqm::{classify_quality_bucket, AnnotationSet, QualityBucket};

#[derive(Debug, Error)]
pub enum StatError {
    #[error("empty input")]
    EmptyInput,
    #[error("need at least two systems, got {0}")]
    TooFewSystems(usize),
    #[error("no comparable pairs")]
    NoPairs,
    #[error("undefined statistic: {0}")]
    Undefined(String),
    #[error("invalid score: {0}")]
    InvalidScore(f64),
}

/// One (gold score, metric score) pair keyed by segment and system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSegment {
    pub language_pair: String,
    pub seg_id: String,
    pub system_id: String,
    pub metric_score: f64,
    pub gold_score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemMeans {
    pub metric: f64,
    pub gold: f64,
    pub segments: usize,
}

/// Arithmetic means per system. Warns when systems do not cover the
/// same segment set.
pub fn system_scores(
    segments: &[ScoredSegment],
) -> Result<(BTreeMap<String, SystemMeans>, Vec<String>), StatError> {
    if segments.is_empty() {
        return Err(StatError::EmptyInput);
    }
    let mut sums: BTreeMap<String, (f64, f64, usize)> = BTreeMap::new();
    let mut coverage: BTreeMap<String, Vec<(String, String)>> = BTreeMap::new();
    for seg in segments {
        let entry = sums.entry(seg.system_id.clone()).or_insert((0.0, 0.0, 0));
        entry.0 += seg.metric_score;
        entry.1 += seg.gold_score;
        entry.2 += 1;
        coverage
            .entry(seg.system_id.clone())
            .or_default()
            .push((seg.language_pair.clone(), seg.seg_id.clone()));
    }
    let mut warnings = Vec::new();
    let mut keysets: Vec<(&String, Vec<(String, String)>)> = coverage
        .iter()
        .map(|(sys, keys)| {
            let mut sorted = keys.clone();
            sorted.sort();
            (sys, sorted)
        })
        .collect();
    keysets.sort_by(|a, b| a.0.cmp(b.0));
    if let Some((_, first)) = keysets.first() {
        for (sys, keys) in &keysets {
            if keys != first {
                warnings.push(format!(
                    "system {sys} does not cover the same segment set as {}",
                    keysets[0].0
                ));
            }
        }
    }
    let means = sums
        .into_iter()
        .map(|(sys, (metric, gold, n))| {
            (sys, SystemMeans { metric: metric / n as f64, gold: gold / n as f64, segments: n })
        })
        .collect();
    Ok((means, warnings))
}

/// Fraction of unordered system pairs whose metric difference has the
/// same sign as the gold difference. Gold-tied pairs are excluded
/// from both numerator and denominator.
pub fn system_pairwise_accuracy(means: &BTreeMap<String, SystemMeans>) -> Result<f64, StatError> {
    if means.len() < 2 {
        return Err(StatError::TooFewSystems(means.len()));
    }
    let systems: Vec<&SystemMeans> = means.values().collect();
    let mut total = 0usize;
    let mut correct = 0usize;
    for i in 0..systems.len() {
        for j in (i + 1)..systems.len() {
            let gold_delta = systems[i].gold - systems[j].gold;
            if gold_delta == 0.0 {
                continue;
            }
            total += 1;
            let metric_delta = systems[i].metric - systems[j].metric;
            if metric_delta != 0.0 && metric_delta.signum() == gold_delta.signum() {
                correct += 1;
            }
        }
    }
    if total == 0 {
        return Err(StatError::Undefined(
            "all system pairs are gold-tied".to_string(),
        ));
    }
    Ok(correct as f64 / total as f64)
}

/// Sample Pearson correlation coefficient. Zero variance in either
/// vector is an explicit error, never a silent zero.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, StatError> {
    if x.len() != y.len() {
        return Err(StatError::Undefined(format!(
            "length mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(StatError::Undefined("need at least two points".to_string()));
    }
    let n = x.len() as f64;
    let mean_x = x.iter().sum::<f64>() / n;
    let mean_y = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        let dx = xi - mean_x;
        let dy = yi - mean_y;
        cov += dx * dy;
        var_x += dx * dx;
        var_y += dy * dy;
    }
    if var_x == 0.0 || var_y == 0.0 {
        return Err(StatError::Undefined("zero variance".to_string()));
    }
    Ok(cov / (var_x.sqrt() * var_y.sqrt()))
}

/// All same-segment cross-system pairs, in a deterministic order.
fn segment_pairs(segments: &[ScoredSegment]) -> Vec<(&ScoredSegment, &ScoredSegment)> {
    let mut by_segment: BTreeMap<(&str, &str), Vec<&ScoredSegment>> = BTreeMap::new();
    for seg in segments {
        by_segment
            .entry((seg.language_pair.as_str(), seg.seg_id.as_str()))
            .or_default()
            .push(seg);
    }
    let mut pairs = Vec::new();
    for group in by_segment.values_mut() {
        group.sort_by(|a, b| a.system_id.cmp(&b.system_id));
        for i in 0..group.len() {
            for j in (i + 1)..group.len() {
                if group[i].system_id != group[j].system_id {
                    pairs.push((group[i], group[j]));
                }
            }
        }
    }
    pairs
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Relation {
    Less,
    Greater,
    Tie,
}

fn gold_relation(a: f64, b: f64) -> Relation {
    if a == b {
        Relation::Tie
    } else if a < b {
        Relation::Less
    } else {
        Relation::Greater
    }
}

fn metric_relation(a: f64, b: f64, epsilon: f64) -> Relation {
    if (a - b).abs() <= epsilon {
        Relation::Tie
    } else if a < b {
        Relation::Less
    } else {
        Relation::Greater
    }
}

/// Tie-calibrated segment-level pairwise accuracy: gold relations use
/// exact equality; metric differences within epsilon count as ties.
pub fn accuracy_t(segments: &[ScoredSegment], epsilon: f64) -> Result<f64, StatError> {
    let pairs = segment_pairs(segments);
    if pairs.is_empty() {
        return Err(StatError::NoPairs);
    }
    let correct = pairs
        .iter()
        .filter(|(a, b)| {
            gold_relation(a.gold_score, b.gold_score)
                == metric_relation(a.metric_score, b.metric_score, epsilon)
        })
        .count();
    Ok(correct as f64 / pairs.len() as f64)
}

/// Best accuracy over the candidate epsilons {0} union every observed
/// |metric difference|; the objective is piecewise constant so the
/// optimum is attained on that grid. Accuracy ties break toward the
/// smallest epsilon.
pub fn accuracy_t_star(segments: &[ScoredSegment]) -> Result<(f64, f64), StatError> {
    let pairs = segment_pairs(segments);
    if pairs.is_empty() {
        return Err(StatError::NoPairs);
    }
    let mut candidates: Vec<f64> = std::iter::once(0.0)
        .chain(pairs.iter().map(|(a, b)| (a.metric_score - b.metric_score).abs()))
        .collect();
    candidates.sort_by(|a, b| a.partial_cmp(b).expect("finite gaps"));
    candidates.dedup();

    let mut best = (f64::NEG_INFINITY, 0.0);
    for &epsilon in &candidates {
        let acc = accuracy_t(segments, epsilon)?;
        if acc > best.0 {
            best = (acc, epsilon);
        }
    }
    Ok(best)
}

/// Equal-weight combination of the four meta-evaluation components.
/// Summed smallest-magnitude first to minimize rounding error.
pub fn meta_score(sys_acc: f64, sys_r: f64, seg_acc_t: f64, seg_r: f64) -> f64 {
    let mut parts = [sys_acc, sys_r, seg_acc_t, seg_r];
    parts.sort_by(|a, b| a.abs().partial_cmp(&b.abs()).expect("finite components"));
    0.25 * parts.iter().sum::<f64>()
}

/// Span precision/recall/F1 counts for one unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub matches: usize,
    pub predicted: usize,
    pub gold: usize,
}

impl Prf {
    pub fn from_counts(matches: usize, predicted: usize, gold: usize) -> Prf {
        let precision = if predicted == 0 {
            if gold == 0 {
                1.0
            } else {
                0.0
            }
        } else {
            matches as f64 / predicted as f64
        };
        let recall = if gold == 0 {
            if predicted == 0 {
                1.0
            } else {
                0.0
            }
        } else {
            matches as f64 / gold as f64
        };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf { precision, recall, f1, matches, predicted, gold }
    }
}

fn span_multiset(set: &AnnotationSet) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for ann in &set.annotations {
        if ann.is_no_error() {
            continue;
        }
        *counts.entry(ann.span.normalized()).or_insert(0) += 1;
    }
    counts
}

/// One-to-one multiset matching of predicted spans to gold spans by
/// normalized (trim + casefold) equality. Severity and category are
/// ignored; no-error annotations do not participate.
pub fn span_prf(predicted: &AnnotationSet, gold: &AnnotationSet) -> Prf {
    let pred_counts = span_multiset(predicted);
    let gold_counts = span_multiset(gold);
    let predicted_total: usize = pred_counts.values().sum();
    let gold_total: usize = gold_counts.values().sum();
    let matches: usize = pred_counts
        .iter()
        .map(|(span, &count)| count.min(*gold_counts.get(span).unwrap_or(&0)))
        .sum();
    Prf::from_counts(matches, predicted_total, gold_total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BucketDistribution {
    pub hq: usize,
    pub mq: usize,
    pub lq: usize,
    pub hq_pct: f64,
    pub mq_pct: f64,
    pub lq_pct: f64,
    pub total: usize,
}

/// Percentage of scores per quality bucket.
pub fn score_distribution(scores: &[f64]) -> Result<BucketDistribution, StatError> {
    if scores.is_empty() {
        return Err(StatError::EmptyInput);
    }
    let mut hq = 0usize;
    let mut mq = 0usize;
    let mut lq = 0usize;
    for &score in scores {
        match classify_quality_bucket(score).map_err(|_| StatError::InvalidScore(score))? {
            QualityBucket::HQ => hq += 1,
            QualityBucket::MQ => mq += 1,
            QualityBucket::LQ => lq += 1,
        }
    }
    let total = scores.len();
    let pct = |n: usize| 100.0 * n as f64 / total as f64;
    Ok(BucketDistribution {
        hq,
        mq,
        lq,
        hq_pct: pct(hq),
        mq_pct: pct(mq),
        lq_pct: pct(lq),
        total,
    })
}

/// The four-component report for one language pair (or a pooled set).
/// Components that are undefined on the data carry the reason in
/// `notes` instead of a number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaReport {
    pub label: String,
    pub sys_pairwise_acc: Option<f64>,
    pub sys_pearson: Option<f64>,
    pub seg_acc_t: Option<f64>,
    pub seg_acc_t_epsilon: Option<f64>,
    pub seg_pearson: Option<f64>,
    pub meta: Option<f64>,
    pub systems: usize,
    pub segments: usize,
    pub pairs: usize,
    pub notes: Vec<String>,
}

/// Assemble a report over one group of scored segments. A fixed
/// epsilon pins accuracy-t; otherwise the epsilon is calibrated.
pub fn build_meta_report(
    label: &str,
    segments: &[ScoredSegment],
    epsilon: Option<f64>,
) -> MetaReport {
    let mut notes = Vec::new();
    let mut report = MetaReport {
        label: label.to_string(),
        sys_pairwise_acc: None,
        sys_pearson: None,
        seg_acc_t: None,
        seg_acc_t_epsilon: None,
        seg_pearson: None,
        meta: None,
        systems: 0,
        segments: 0,
        pairs: segment_pairs(segments).len(),
        notes: Vec::new(),
    };
    let mut seg_keys: Vec<(&str, &str)> = segments
        .iter()
        .map(|s| (s.language_pair.as_str(), s.seg_id.as_str()))
        .collect();
    seg_keys.sort();
    seg_keys.dedup();
    report.segments = seg_keys.len();

    match system_scores(segments) {
        Ok((means, warnings)) => {
            notes.extend(warnings);
            report.systems = means.len();
            match system_pairwise_accuracy(&means) {
                Ok(acc) => report.sys_pairwise_acc = Some(acc),
                Err(e) => notes.push(format!("sys_pairwise_acc: {e}")),
            }
            let metric: Vec<f64> = means.values().map(|m| m.metric).collect();
            let gold: Vec<f64> = means.values().map(|m| m.gold).collect();
            match pearson(&metric, &gold) {
                Ok(r) => report.sys_pearson = Some(r),
                Err(e) => notes.push(format!("sys_pearson: {e}")),
            }
        }
        Err(e) => notes.push(format!("system_scores: {e}")),
    }

    let acc_t = match epsilon {
        Some(eps) => accuracy_t(segments, eps).map(|acc| (acc, eps)),
        None => accuracy_t_star(segments),
    };
    match acc_t {
        Ok((acc, eps)) => {
            report.seg_acc_t = Some(acc);
            report.seg_acc_t_epsilon = Some(eps);
        }
        Err(e) => notes.push(format!("seg_acc_t: {e}")),
    }

    let metric: Vec<f64> = segments.iter().map(|s| s.metric_score).collect();
    let gold: Vec<f64> = segments.iter().map(|s| s.gold_score).collect();
    match pearson(&metric, &gold) {
        Ok(r) => report.seg_pearson = Some(r),
        Err(e) => notes.push(format!("seg_pearson: {e}")),
    }

    if let (Some(a), Some(b), Some(c), Some(d)) = (
        report.sys_pairwise_acc,
        report.sys_pearson,
        report.seg_acc_t,
        report.seg_pearson,
    ) {
        report.meta = Some(meta_score(a, b, c, d));
    }
    report.notes = notes;
    report
}

/// Group segments by language pair, in order of first appearance.
pub fn group_by_language_pair(segments: &[ScoredSegment]) -> Vec<(String, Vec<ScoredSegment>)> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, Vec<ScoredSegment>> = BTreeMap::new();
    for seg in segments {
        if !groups.contains_key(&seg.language_pair) {
            order.push(seg.language_pair.clone());
        }
        groups.entry(seg.language_pair.clone()).or_default().push(seg.clone());
    }
    order
        .into_iter()
        .map(|lp| {
            let group = groups.remove(&lp).expect("group exists");
            (lp, group)
        })
        .collect()
}

/// Pooled view across language pairs: systems are namespaced per pair
/// so per-pair system populations stay distinct.
pub fn pooled_segments(segments: &[ScoredSegment]) -> Vec<ScoredSegment> {
    segments
        .iter()
        .map(|s| ScoredSegment {
            language_pair: s.language_pair.clone(),
            seg_id: s.seg_id.clone(),
            system_id: format!("{}:{}", s.language_pair, s.system_id),
            metric_score: s.metric_score,
            gold_score: s.gold_score,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mqm::{CategoryPath, ErrorAnnotation, Provenance, Severity, Span, TopCategory};

    fn seg(lp: &str, seg_id: &str, system: &str, metric: f64, gold: f64) -> ScoredSegment {
        ScoredSegment {
            language_pair: lp.into(),
            seg_id: seg_id.into(),
            system_id: system.into(),
            metric_score: metric,
            gold_score: gold,
        }
    }

    #[test]
    fn system_scores_means() {
        let (means, warnings) = system_scores(&[
            seg("zh-en", "1", "A", -1.0, -2.0),
            seg("zh-en", "2", "A", -3.0, -4.0),
        ])
        .unwrap();
        assert_eq!(means["A"].metric, -2.0);
        assert_eq!(means["A"].gold, -3.0);
        assert!(warnings.is_empty());
    }

    #[test]
    fn disjoint_coverage_warns() {
        let (_, warnings) = system_scores(&[
            seg("zh-en", "1", "A", -1.0, -2.0),
            seg("zh-en", "2", "B", -3.0, -4.0),
        ])
        .unwrap();
        assert_eq!(warnings.len(), 1);
    }

    #[test]
    fn pairwise_accuracy_perfect_and_reversed() {
        let mk = |metric: [f64; 3]| {
            BTreeMap::from([
                ("A".to_string(), SystemMeans { metric: metric[0], gold: -1.0, segments: 1 }),
                ("B".to_string(), SystemMeans { metric: metric[1], gold: -2.0, segments: 1 }),
                ("C".to_string(), SystemMeans { metric: metric[2], gold: -3.0, segments: 1 }),
            ])
        };
        assert_eq!(system_pairwise_accuracy(&mk([-1.0, -2.0, -3.0])).unwrap(), 1.0);
        assert_eq!(system_pairwise_accuracy(&mk([1.0, 2.0, 3.0])).unwrap(), 0.0);
        let single = BTreeMap::from([(
            "A".to_string(),
            SystemMeans { metric: 0.0, gold: 0.0, segments: 1 },
        )]);
        assert!(matches!(
            system_pairwise_accuracy(&single),
            Err(StatError::TooFewSystems(1))
        ));
        let tied = BTreeMap::from([
            ("A".to_string(), SystemMeans { metric: 0.0, gold: -1.0, segments: 1 }),
            ("B".to_string(), SystemMeans { metric: 1.0, gold: -1.0, segments: 1 }),
        ]);
        assert!(matches!(system_pairwise_accuracy(&tied), Err(StatError::Undefined(_))));
    }

    #[test]
    fn pearson_identity_and_negation() {
        let x = [1.0, 2.0, 3.0];
        assert!((pearson(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &neg).unwrap() + 1.0).abs() < 1e-12);
        assert!(pearson(&[1.0, 1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn pearson_against_direct_formula() {
        // Independent computation from the covariance definition.
        let x = [1.0, 2.0, 3.0];
        let y = [1.0, 2.0, 4.0];
        let n = 3.0;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let cov: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / n;
        let sx = (x.iter().map(|a| (a - mx).powi(2)).sum::<f64>() / n).sqrt();
        let sy = (y.iter().map(|b| (b - my).powi(2)).sum::<f64>() / n).sqrt();
        let expected = cov / (sx * sy);
        assert!((pearson(&x, &y).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn accuracy_t_all_gold_ties_constant_metric() {
        let segments = [
            seg("zh-en", "1", "A", -1.0, -2.0),
            seg("zh-en", "1", "B", -1.0, -2.0),
            seg("zh-en", "2", "A", -1.0, -3.0),
            seg("zh-en", "2", "B", -1.0, -3.0),
        ];
        assert_eq!(accuracy_t(&segments, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn accuracy_t_exact_match_is_perfect() {
        let segments = [
            seg("zh-en", "1", "A", -1.0, -1.0),
            seg("zh-en", "1", "B", -2.0, -2.0),
            seg("zh-en", "2", "A", 0.0, 0.0),
            seg("zh-en", "2", "B", -5.0, -5.0),
        ];
        assert_eq!(accuracy_t(&segments, 0.0).unwrap(), 1.0);
        let (best, eps) = accuracy_t_star(&segments).unwrap();
        assert_eq!(best, 1.0);
        assert_eq!(eps, 0.0);
    }

    #[test]
    fn accuracy_t_star_recovers_ties_with_calibration() {
        // Gold ties separated by tiny metric noise; true differences
        // are large. Any epsilon in [0.1, 1) recovers 100%.
        let segments = [
            seg("zh-en", "1", "A", -1.0, -2.0),
            seg("zh-en", "1", "B", -1.1, -2.0),
            seg("zh-en", "2", "A", 0.0, 0.0),
            seg("zh-en", "2", "B", -2.0, -4.0),
        ];
        assert!(accuracy_t(&segments, 0.0).unwrap() < 1.0);
        let (best, eps) = accuracy_t_star(&segments).unwrap();
        assert_eq!(best, 1.0);
        assert!((0.1..1.0).contains(&eps), "epsilon {eps} outside [0.1, 1)");
    }

    #[test]
    fn meta_score_identities() {
        assert_eq!(meta_score(1.0, 1.0, 1.0, 1.0), 1.0);
        assert_eq!(meta_score(0.8, 0.6, 0.4, 0.2), 0.5);
        assert_eq!(meta_score(0.0, 0.0, 0.0, 0.0), 0.0);
    }

    fn set_of(spans: &[&str]) -> AnnotationSet {
        AnnotationSet {
            unit_key: None,
            annotations: spans
                .iter()
                .map(|s| {
                    ErrorAnnotation::new(
                        Span::Text(s.to_string()),
                        CategoryPath::top_only(TopCategory::Other),
                        Severity::Minor,
                    )
                })
                .collect(),
            provenance: Provenance::Gold,
        }
    }

    #[test]
    fn span_prf_identical_and_disjoint() {
        let a = set_of(&["x", "y"]);
        let prf = span_prf(&a, &a);
        assert_eq!((prf.precision, prf.recall, prf.f1), (1.0, 1.0, 1.0));
        let prf = span_prf(&set_of(&["x"]), &set_of(&["z"]));
        assert_eq!((prf.precision, prf.recall, prf.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn span_prf_multiset_counting() {
        // predicted {a, a, b}, gold {a, c}: one match.
        let prf = span_prf(&set_of(&["a", "a", "b"]), &set_of(&["a", "c"]));
        assert_eq!(prf.matches, 1);
        assert!((prf.precision - 1.0 / 3.0).abs() < 1e-12);
        assert!((prf.recall - 0.5).abs() < 1e-12);
    }

    #[test]
    fn span_prf_swap_swaps_precision_and_recall() {
        let a = set_of(&["a", "b", "c"]);
        let b = set_of(&["b", "c", "d", "e"]);
        let ab = span_prf(&a, &b);
        let ba = span_prf(&b, &a);
        assert_eq!(ab.precision, ba.recall);
        assert_eq!(ab.recall, ba.precision);
        assert_eq!(ab.f1, ba.f1);
    }

    #[test]
    fn span_prf_empty_conventions() {
        let empty = set_of(&[]);
        let some = set_of(&["x"]);
        let prf = span_prf(&empty, &empty);
        assert_eq!((prf.precision, prf.recall, prf.f1), (1.0, 1.0, 1.0));
        let prf = span_prf(&empty, &some);
        assert_eq!((prf.precision, prf.recall, prf.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn distribution_examples() {
        let d = score_distribution(&[0.0, 0.0]).unwrap();
        assert_eq!((d.hq_pct, d.mq_pct, d.lq_pct), (100.0, 0.0, 0.0));
        let d = score_distribution(&[0.0, -1.0, -5.0, -10.0]).unwrap();
        assert_eq!((d.hq_pct, d.mq_pct, d.lq_pct), (25.0, 25.0, 50.0));
        assert!(score_distribution(&[]).is_err());
        assert!(score_distribution(&[1.0]).is_err());
    }

    #[test]
    fn meta_report_on_identical_scores_is_one() {
        let segments: Vec<ScoredSegment> = (0..10)
            .flat_map(|i| {
                ["A", "B", "C"].into_iter().enumerate().map(move |(k, sys)| {
                    let score = -((i + k) as f64);
                    seg("zh-en", &format!("s{i}"), sys, score, score)
                })
            })
            .collect();
        let report = build_meta_report("zh-en", &segments, None);
        assert_eq!(report.sys_pairwise_acc, Some(1.0));
        assert_eq!(report.seg_acc_t, Some(1.0));
        assert_eq!(report.meta, Some(1.0));
        assert_eq!(report.systems, 3);
        assert_eq!(report.segments, 10);
    }
}
