use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featurizer::DatasetItem;
use crate::models::TrainedModel;

fn check(scores: &[f64], labels: &[bool]) -> Result<(u64, u64)> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::NonFinite(format!("score {i}")));
    }
    let pos = labels.iter().filter(|&&l| l).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    Ok((pos, neg))
}

/// Indices ordered by ascending score.
fn ascending(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    order
}

/// Calls `f(positives, negatives, score)` for each group of tied scores.
fn tie_groups(scores: &[f64], labels: &[bool], order: &[usize], mut f: impl FnMut(u64, u64, f64)) {
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (mut p, mut n) = (0, 0);
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                p += 1;
            } else {
                n += 1;
            }
            i += 1;
        }
        f(p, n, s);
    }
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half (the Mann–Whitney statistic).
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, neg) = check(scores, labels)?;
    let order = ascending(scores);
    // twice the U statistic, kept integral so ties add exactly
    let mut doubled: u128 = 0;
    let mut neg_below: u64 = 0;
    tie_groups(scores, labels, &order, |p, n, _| {
        doubled += 2 * u128::from(p) * u128::from(neg_below) + u128::from(p) * u128::from(n);
        neg_below += n;
    });
    Ok(doubled as f64 / (2 * u128::from(pos) * u128::from(neg)) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Rows scoring at or above this value are predicted positive; the
    /// first point uses `+inf`.
    pub threshold: f64,
}

/// ROC points from `(0, 0)` to `(1, 1)`, one per distinct score, thresholds
/// descending.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<RocPoint>> {
    let (pos, neg) = check(scores, labels)?;
    let mut order = ascending(scores);
    order.reverse();
    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    let (mut tp, mut fp) = (0u64, 0u64);
    tie_groups(scores, labels, &order, |p, n, s| {
        tp += p;
        fp += n;
        points.push(RocPoint {
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
            threshold: s,
        });
    });
    Ok(points)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdMetrics {
    pub threshold: f64,
    /// `None` when nothing is predicted positive.
    pub precision: Option<f64>,
    pub recall: f64,
    pub specificity: f64,
}

/// Confusion-matrix rates when rows scoring `>= threshold` are called positive.
pub fn confusion_at(scores: &[f64], labels: &[bool], threshold: f64) -> Result<ThresholdMetrics> {
    let (pos, neg) = check(scores, labels)?;
    let (mut tp, mut fp) = (0u64, 0u64);
    for (&s, &l) in scores.iter().zip(labels) {
        if s >= threshold {
            if l {
                tp += 1;
            } else {
                fp += 1;
            }
        }
    }
    Ok(ThresholdMetrics {
        threshold,
        precision: (tp + fp > 0).then(|| tp as f64 / (tp + fp) as f64),
        recall: tp as f64 / pos as f64,
        specificity: (neg - fp) as f64 / neg as f64,
    })
}

/// Metrics at every distinct score, highest threshold first.
pub fn sweep_scores(scores: &[f64], labels: &[bool]) -> Result<Vec<ThresholdMetrics>> {
    let (pos, neg) = check(scores, labels)?;
    let mut order = ascending(scores);
    order.reverse();
    let mut rows = Vec::new();
    let (mut tp, mut fp) = (0u64, 0u64);
    tie_groups(scores, labels, &order, |p, n, s| {
        tp += p;
        fp += n;
        rows.push(ThresholdMetrics {
            threshold: s,
            precision: Some(tp as f64 / (tp + fp) as f64),
            recall: tp as f64 / pos as f64,
            specificity: (neg - fp) as f64 / neg as f64,
        });
    });
    Ok(rows)
}

/// Scores `items` with `model` and sweeps every distinct score.
pub fn threshold_sweep(
    model: &TrainedModel,
    items: &[DatasetItem],
) -> Result<Vec<ThresholdMetrics>> {
    if items.is_empty() {
        return Err(Error::invalid("threshold sweep needs test items"));
    }
    let scores = model.predict_many(items)?;
    let labels: Vec<bool> = items.iter().map(|i| i.label).collect();
    sweep_scores(&scores, &labels)
}
