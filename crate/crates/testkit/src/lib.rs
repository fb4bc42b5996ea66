//! Independent oracles for the statistics and scoring rules, written
//! as plain brute-force enumeration and textbook formulas. Test-only:
//! nothing here shares code with the implementations it checks.

use std::collections::BTreeMap;

use mmad_core::meta::ScoredSegment;
use rand::Rng;

/// Direct weighted-count score: floor if any non-translation, else
/// `-(w_major * majors + w_minor * minors)` clamped at the floor.
pub fn mqm_score_oracle(
    majors: usize,
    minors: usize,
    has_non_translation: bool,
    w_major: f64,
    w_minor: f64,
    floor: f64,
) -> f64 {
    if has_non_translation {
        return floor;
    }
    let raw = -(w_major * majors as f64 + w_minor * minors as f64);
    if raw < floor {
        floor
    } else if raw == 0.0 {
        0.0
    } else {
        raw
    }
}

/// Naive second-pass accumulation of per-system means.
pub fn system_means_oracle(segments: &[ScoredSegment]) -> BTreeMap<String, (f64, f64)> {
    let mut systems: Vec<&str> = segments.iter().map(|s| s.system_id.as_str()).collect();
    systems.sort();
    systems.dedup();
    let mut out = BTreeMap::new();
    for system in systems {
        let mut metric = 0.0;
        let mut gold = 0.0;
        let mut n = 0usize;
        for seg in segments {
            if seg.system_id == system {
                metric += seg.metric_score;
                gold += seg.gold_score;
                n += 1;
            }
        }
        out.insert(system.to_string(), (metric / n as f64, gold / n as f64));
    }
    out
}

/// Exhaustive pair enumeration for system-level pairwise accuracy.
/// `None` when no gold-untied pair exists.
pub fn pairwise_accuracy_oracle(means: &[(String, f64, f64)]) -> Option<f64> {
    let mut sorted: Vec<&(String, f64, f64)> = means.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    let mut total = 0u64;
    let mut correct = 0u64;
    for i in 0..sorted.len() {
        for j in 0..sorted.len() {
            if i >= j {
                continue;
            }
            let (_, metric_a, gold_a) = sorted[i];
            let (_, metric_b, gold_b) = sorted[j];
            if gold_a == gold_b {
                continue;
            }
            total += 1;
            let gold_says_a = gold_a > gold_b;
            if metric_a != metric_b && (metric_a > metric_b) == gold_says_a {
                correct += 1;
            }
        }
    }
    if total == 0 {
        None
    } else {
        Some(correct as f64 / total as f64)
    }
}

fn relation(a: f64, b: f64, eps: f64) -> i8 {
    if (a - b).abs() <= eps {
        0
    } else if a < b {
        -1
    } else {
        1
    }
}

/// Exhaustive enumeration of all same-segment system pairs for
/// tie-calibrated accuracy. `None` when there are no pairs.
pub fn accuracy_t_oracle(segments: &[ScoredSegment], epsilon: f64) -> Option<f64> {
    let mut total = 0u64;
    let mut correct = 0u64;
    for i in 0..segments.len() {
        for j in 0..segments.len() {
            if i >= j {
                continue;
            }
            let (a, b) = (&segments[i], &segments[j]);
            if a.language_pair != b.language_pair
                || a.seg_id != b.seg_id
                || a.system_id == b.system_id
            {
                continue;
            }
            total += 1;
            let gold_rel = relation(a.gold_score, b.gold_score, 0.0);
            let metric_rel = relation(a.metric_score, b.metric_score, epsilon);
            if gold_rel == metric_rel {
                correct += 1;
            }
        }
    }
    if total == 0 {
        None
    } else {
        Some(correct as f64 / total as f64)
    }
}

/// Sweep every candidate epsilon (zero plus all observed metric
/// gaps), breaking accuracy ties toward the smallest epsilon.
pub fn accuracy_t_star_oracle(segments: &[ScoredSegment]) -> Option<(f64, f64)> {
    let mut candidates = vec![0.0f64];
    for i in 0..segments.len() {
        for j in 0..segments.len() {
            if i >= j {
                continue;
            }
            let (a, b) = (&segments[i], &segments[j]);
            if a.language_pair == b.language_pair
                && a.seg_id == b.seg_id
                && a.system_id != b.system_id
            {
                candidates.push((a.metric_score - b.metric_score).abs());
            }
        }
    }
    candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    candidates.dedup();
    let mut best: Option<(f64, f64)> = None;
    for eps in candidates {
        let acc = accuracy_t_oracle(segments, eps)?;
        match best {
            Some((best_acc, _)) if acc <= best_acc => {}
            _ => best = Some((acc, eps)),
        }
    }
    best
}

/// Textbook covariance-definition Pearson. `None` when undefined.
pub fn pearson_oracle(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mean_x = x.iter().sum::<f64>() / n;
    let mean_y = y.iter().sum::<f64>() / n;
    let cov = x
        .iter()
        .zip(y)
        .map(|(a, b)| (a - mean_x) * (b - mean_y))
        .sum::<f64>()
        / n;
    let sd_x = (x.iter().map(|a| (a - mean_x).powi(2)).sum::<f64>() / n).sqrt();
    let sd_y = (y.iter().map(|b| (b - mean_y).powi(2)).sum::<f64>() / n).sqrt();
    if sd_x == 0.0 || sd_y == 0.0 {
        return None;
    }
    Some(cov / (sd_x * sd_y))
}

/// Size of the best injective matching between predicted and gold
/// spans under exact equality, by exhaustive recursion.
pub fn span_match_oracle(predicted: &[String], gold: &[String]) -> usize {
    fn recurse(predicted: &[String], used: &mut Vec<bool>, gold: &[String], idx: usize) -> usize {
        if idx == predicted.len() {
            return 0;
        }
        // Skip this predicted span.
        let mut best = recurse(predicted, used, gold, idx + 1);
        for (g, gold_span) in gold.iter().enumerate() {
            if !used[g] && *gold_span == predicted[idx] {
                used[g] = true;
                best = best.max(1 + recurse(predicted, used, gold, idx + 1));
                used[g] = false;
            }
        }
        best
    }
    let mut used = vec![false; gold.len()];
    recurse(predicted, &mut used, gold, 0)
}

/// Second-pass bucket recount: (hq, mq, lq).
pub fn distribution_oracle(scores: &[f64]) -> (usize, usize, usize) {
    let mut hq = 0;
    let mut mq = 0;
    let mut lq = 0;
    for &s in scores {
        if s == 0.0 {
            hq += 1;
        } else if s > -5.0 && s < 0.0 {
            mq += 1;
        } else {
            lq += 1;
        }
    }
    (hq, mq, lq)
}

/// Random meta-evaluation instance: up to `max_systems` systems over
/// up to `max_segments` segments, with duplicated gold values so ties
/// actually occur.
pub fn gen_scored_segments<R: Rng>(
    rng: &mut R,
    max_systems: usize,
    max_segments: usize,
) -> Vec<ScoredSegment> {
    let n_systems = rng.gen_range(2..=max_systems.max(2));
    let n_segments = rng.gen_range(1..=max_segments.max(1));
    let mut out = Vec::new();
    for seg in 0..n_segments {
        for sys in 0..n_systems {
            // Coarse integer-ish grids make exact ties common.
            let gold = -(rng.gen_range(0..=10) as f64);
            let metric = if rng.gen_bool(0.3) {
                gold
            } else {
                -(rng.gen_range(0..=40) as f64) / 2.0
            };
            out.push(ScoredSegment {
                language_pair: "zh-en".to_string(),
                seg_id: format!("seg{seg}"),
                system_id: format!("sys{sys}"),
                metric_score: metric,
                gold_score: gold,
            });
        }
    }
    out
}
