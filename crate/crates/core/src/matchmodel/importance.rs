use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::average_precision;
use super::train::{check_lengths, derive_seed, MatchModel};
use super::MatchModelError;
use crate::lingfeat::{FeatureVector, FEATURE_COUNT, FEATURE_NAMES};

pub const MIN_IMPORTANCE_ROWS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub feature: String,
    /// Mean drop in AP when the column is shuffled.
    pub importance: f64,
    pub std: f64,
    /// 1 = most important; ties keep schema order.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub baseline_ap: f64,
    pub repeats: usize,
    pub seed: u64,
    /// All slots, in schema order.
    pub features: Vec<FeatureImportance>,
}

impl ImportanceReport {
    pub fn ranked(&self) -> Vec<&FeatureImportance> {
        let mut v: Vec<&FeatureImportance> = self.features.iter().collect();
        v.sort_by_key(|f| f.rank);
        v
    }

    pub fn get(&self, feature: &str) -> Option<&FeatureImportance> {
        self.features.iter().find(|f| f.feature == feature)
    }
}

/// Permutation importance on held-out rows. Column `j` is shuffled with its
/// own RNG stream, so scores do not depend on thread count.
pub fn permutation_importance(
    model: &MatchModel,
    features: &[FeatureVector],
    labels: &[u8],
    seed: u64,
    repeats: usize,
) -> Result<ImportanceReport, MatchModelError> {
    check_lengths(features, labels)?;
    if features.is_empty() {
        return Err(MatchModelError::EmptyTestSet);
    }
    if features.len() < MIN_IMPORTANCE_ROWS {
        return Err(MatchModelError::TooFewSamples {
            found: features.len(),
            required: MIN_IMPORTANCE_ROWS,
        });
    }
    if repeats == 0 {
        return Err(MatchModelError::InvalidConfig("repeats must be positive".into()));
    }
    let rows: Vec<[f64; FEATURE_COUNT]> = features.iter().map(|fv| model.dense(fv)).collect();
    let ap_of = |scores: &[f64]| average_precision(scores, labels).ok_or(MatchModelError::SingleClassDataset);
    let base_scores: Vec<f64> = rows.par_iter().map(|r| model.predict_dense(r)).collect();
    let baseline = ap_of(&base_scores)?;

    let drops: Vec<Vec<f64>> = (0..FEATURE_COUNT)
        .into_par_iter()
        .map(|j| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, j as u64));
            let mut column: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            let mut out = Vec::with_capacity(repeats);
            let mut row = [0.0; FEATURE_COUNT];
            for _ in 0..repeats {
                column.shuffle(&mut rng);
                let scores: Vec<f64> = rows
                    .iter()
                    .zip(&column)
                    .map(|(r, v)| {
                        row = *r;
                        row[j] = *v;
                        model.predict_dense(&row)
                    })
                    .collect();
                let ap = average_precision(&scores, labels).unwrap_or(baseline);
                out.push(baseline - ap);
            }
            out
        })
        .collect();

    let mut features_out: Vec<FeatureImportance> = drops
        .iter()
        .enumerate()
        .map(|(j, d)| {
            let mean = d.iter().sum::<f64>() / d.len() as f64;
            let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / d.len() as f64;
            FeatureImportance {
                feature: FEATURE_NAMES[j].to_owned(),
                importance: mean,
                std: var.sqrt(),
                rank: 0,
            }
        })
        .collect();
    let mut order: Vec<usize> = (0..FEATURE_COUNT).collect();
    order.sort_by(|a, b| {
        features_out[*b]
            .importance
            .total_cmp(&features_out[*a].importance)
            .then(a.cmp(b))
    });
    for (rank, j) in order.into_iter().enumerate() {
        features_out[j].rank = rank + 1;
    }
    Ok(ImportanceReport {
        baseline_ap: baseline,
        repeats,
        seed,
        features: features_out,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelatedPair {
    pub a: String,
    pub b: String,
    pub r: f64,
}

/// Pearson correlations between feature columns. Diagnostic only; nothing
/// is dropped from the schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    /// `None` where either column has zero variance.
    pub matrix: Vec<Vec<Option<f64>>>,
    pub threshold: f64,
    /// Off-diagonal pairs with `|r| >= threshold`, strongest first.
    pub high: Vec<CorrelatedPair>,
}

pub fn feature_correlation(
    model_medians: &[f64],
    features: &[FeatureVector],
    threshold: f64,
) -> CorrelationReport {
    let mut fill = [0.0; FEATURE_COUNT];
    fill.copy_from_slice(&model_medians[..FEATURE_COUNT]);
    let rows: Vec<[f64; FEATURE_COUNT]> = features.iter().map(|fv| fv.dense(&fill)).collect();
    let n = rows.len() as f64;
    let mean: Vec<f64> = (0..FEATURE_COUNT)
        .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n)
        .collect();
    let mut matrix = vec![vec![None; FEATURE_COUNT]; FEATURE_COUNT];
    for a in 0..FEATURE_COUNT {
        for b in a..FEATURE_COUNT {
            let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
            for r in &rows {
                let (da, db) = (r[a] - mean[a], r[b] - mean[b]);
                sab += da * db;
                saa += da * da;
                sbb += db * db;
            }
            let r = (saa > 0.0 && sbb > 0.0).then(|| (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0));
            matrix[a][b] = r;
            matrix[b][a] = r;
        }
    }
    let mut high = Vec::new();
    for a in 0..FEATURE_COUNT {
        for b in a + 1..FEATURE_COUNT {
            if let Some(r) = matrix[a][b] {
                if r.abs() >= threshold {
                    high.push(CorrelatedPair {
                        a: FEATURE_NAMES[a].into(),
                        b: FEATURE_NAMES[b].into(),
                        r,
                    });
                }
            }
        }
    }
    high.sort_by(|x, y| y.r.abs().total_cmp(&x.r.abs()));
    CorrelationReport {
        matrix,
        threshold,
        high,
    }
}
