use serde::{Deserialize, Serialize};

/// Average precision: sum over distinct score cutoffs (descending) of
/// `(R_i - R_{i-1}) * P_i`. Tied scores enter together. `None` without
/// positives.
pub fn average_precision(scores: &[f64], labels: &[u8]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len());
    let positives = labels.iter().filter(|l| **l == 1).count();
    if positives == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|a, b| scores[*b].total_cmp(&scores[*a]));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let recall = tp as f64 / positives as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Some(ap)
}

/// Binary classification summary from confusion counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub support: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
}

impl EvalReport {
    /// Precision (recall) is 0 when nothing is predicted (present) positive;
    /// F1 is 0 when P + R = 0.
    pub fn from_counts(tp: usize, fp: usize, tn: usize, fn_: usize) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        let support = tp + fp + tn + fn_;
        Self {
            tp,
            fp,
            tn,
            fn_,
            support,
            precision,
            recall,
            f1,
            accuracy: ratio(tp + tn, support),
        }
    }

    pub fn from_decisions(predicted: &[u8], labels: &[u8]) -> Self {
        assert_eq!(predicted.len(), labels.len());
        let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
        for (p, y) in predicted.iter().zip(labels) {
            match (p, y) {
                (1, 1) => tp += 1,
                (1, _) => fp += 1,
                (_, 1) => fn_ += 1,
                _ => tn += 1,
            }
        }
        Self::from_counts(tp, fp, tn, fn_)
    }
}

/// Threshold in (0, 1) maximizing F1 of `score >= t`. Cutoffs sit halfway
/// between adjacent distinct scores; on F1 ties the higher cutoff wins.
/// Returns `(threshold, f1)`.
pub fn max_f1_threshold(scores: &[f64], labels: &[u8]) -> (f64, f64) {
    let positives = labels.iter().filter(|l| **l == 1).count();
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|a, b| scores[*b].total_cmp(&scores[*a]));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut best = (0.5, -1.0);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let f1 = 2.0 * tp as f64 / (tp + fp + positives) as f64;
        if f1 > best.1 {
            let below = order.get(i).map_or(0.0, |j| scores[*j]);
            best = (0.5 * (s + below), f1);
        }
    }
    (best.0.clamp(1e-9, 1.0 - 1e-9), best.1.max(0.0))
}
