use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{average_precision, max_f1_threshold, EvalReport};
use super::tree::{fit_tree, Presorted, Tree, TreeParams};
use super::MatchModelError;
use crate::lingfeat::{FeatureVector, FEATURE_COUNT, FEATURE_NAMES, FEATURE_SCHEMA_VERSION};

pub const MIN_TRAIN_SAMPLES: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum ThresholdRule {
    /// Maximize F1 over out-of-fold probabilities.
    MaxF1,
    Fixed { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub cv_folds: usize,
    /// Ensemble members; member `m` holds out fold `m % cv_folds` of
    /// repetition `m / cv_folds`.
    pub bags: usize,
    /// Upper bound on boosting rounds per member.
    pub rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    /// L2 penalty on leaf values.
    pub lambda: f64,
    pub min_child_weight: f64,
    pub min_split_gain: f64,
    /// Fraction of training rows sampled per round.
    pub subsample: f64,
    pub time_budget_s: f64,
    pub seed: u64,
    pub threshold_rule: ThresholdRule,
    /// Impute missing slots with training medians instead of refusing.
    pub allow_missing: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            cv_folds: 5,
            bags: 10,
            rounds: 100,
            max_depth: 3,
            learning_rate: 0.1,
            lambda: 1.0,
            min_child_weight: 1e-3,
            min_split_gain: 0.0,
            subsample: 0.8,
            time_budget_s: 60.0,
            seed: 0,
            threshold_rule: ThresholdRule::MaxF1,
            allow_missing: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), MatchModelError> {
        let bad = |m: &str| Err(MatchModelError::InvalidConfig(m.to_owned()));
        if self.cv_folds < 2 {
            return bad("cv_folds must be at least 2");
        }
        if self.bags < self.cv_folds {
            return bad("bags must be at least cv_folds");
        }
        if self.rounds == 0 || self.max_depth == 0 {
            return bad("rounds and max_depth must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad("learning_rate must be in (0, 1]");
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return bad("subsample must be in (0, 1]");
        }
        if !(self.lambda >= 0.0 && self.min_child_weight >= 0.0 && self.min_split_gain >= 0.0) {
            return bad("lambda, min_child_weight and min_split_gain must be non-negative");
        }
        if !(self.time_budget_s > 0.0 && self.time_budget_s.is_finite()) {
            return bad("time_budget_s must be positive");
        }
        if let ThresholdRule::Fixed { value } = self.threshold_rule {
            if !(value > 0.0 && value < 1.0) {
                return bad("fixed threshold must be in (0, 1)");
            }
        }
        Ok(())
    }
}

/// SplitMix64 finalizer; derives independent stream seeds from one master.
pub(crate) fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(0x632b_e59b_d9b4_e019);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub seed: u64,
    pub repetition: usize,
    pub fold: usize,
    pub base_score: f64,
    pub trees: Vec<Tree>,
}

impl Member {
    fn margin(&self, x: &[f64], learning_rate: f64) -> f64 {
        self.base_score + learning_rate * self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberLog {
    pub repetition: usize,
    pub fold: usize,
    pub rounds_completed: usize,
    /// Hold-out AP at the selected round count.
    pub holdout_ap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub samples: usize,
    pub positives: usize,
    pub imputed_values: usize,
    pub members: Vec<MemberLog>,
    pub selected_rounds: usize,
    /// Out-of-fold AP at the selected round count, averaged over repetitions.
    pub oof_average_precision: f64,
    pub oof_report: EvalReport,
    pub budget_exhausted: bool,
}

/// Bagged boosted-tree ensemble over the 17-slot feature schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchModel {
    pub(crate) schema_version: u32,
    pub(crate) feature_names: Vec<String>,
    pub(crate) threshold: f64,
    pub(crate) seed: u64,
    pub(crate) dataset_hash: String,
    pub(crate) learning_rate: f64,
    pub(crate) medians: Vec<f64>,
    pub(crate) members: Vec<Member>,
    pub(crate) config: TrainConfig,
    pub(crate) log: TrainingLog,
}

impl MatchModel {
    pub fn schema_version(&self) -> u32 {
        self.schema_version
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Replaces the decision threshold; must lie in (0, 1).
    pub fn with_threshold(mut self, threshold: f64) -> Result<Self, MatchModelError> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(MatchModelError::InvalidConfig("threshold must be in (0, 1)".into()));
        }
        self.threshold = threshold;
        Ok(self)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dataset_hash(&self) -> &str {
        &self.dataset_hash
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn log(&self) -> &TrainingLog {
        &self.log
    }

    pub fn members(&self) -> &[Member] {
        &self.members
    }

    /// Column medians used to fill missing slots.
    pub fn medians(&self) -> &[f64] {
        &self.medians
    }

    pub fn dense(&self, fv: &FeatureVector) -> [f64; FEATURE_COUNT] {
        let mut fill = [0.0; FEATURE_COUNT];
        fill.copy_from_slice(&self.medians);
        fv.dense(&fill)
    }

    /// Mean member probability on an already dense row.
    pub fn predict_dense(&self, x: &[f64]) -> f64 {
        let sum: f64 = self
            .members
            .iter()
            .map(|m| sigmoid(m.margin(x, self.learning_rate)))
            .sum();
        sum / self.members.len() as f64
    }

    /// Match probability; missing slots take the training medians.
    pub fn predict(&self, fv: &FeatureVector) -> f64 {
        self.predict_dense(&self.dense(fv))
    }

    /// 1 iff `predict >= threshold`.
    pub fn decide(&self, fv: &FeatureVector) -> u8 {
        u8::from(self.predict(fv) >= self.threshold)
    }

    pub fn evaluate(&self, features: &[FeatureVector], labels: &[u8]) -> Result<EvalReport, MatchModelError> {
        check_lengths(features, labels)?;
        if features.is_empty() {
            return Err(MatchModelError::EmptyTestSet);
        }
        let decisions: Vec<u8> = features.par_iter().map(|fv| self.decide(fv)).collect();
        Ok(EvalReport::from_decisions(&decisions, labels))
    }
}

pub(crate) fn check_lengths(features: &[FeatureVector], labels: &[u8]) -> Result<(), MatchModelError> {
    if features.len() != labels.len() {
        return Err(MatchModelError::LengthMismatch {
            features: features.len(),
            labels: labels.len(),
        });
    }
    if let Some(i) = labels.iter().position(|l| *l > 1) {
        return Err(MatchModelError::InvalidLabel { row: i, value: labels[i] });
    }
    Ok(())
}

/// Content hash of a labeled feature matrix. Missing slots hash distinctly
/// from every number.
pub fn dataset_hash(features: &[FeatureVector], labels: &[u8]) -> String {
    let mut bytes = Vec::with_capacity(features.len() * (FEATURE_COUNT * 9 + 1));
    for (fv, y) in features.iter().zip(labels) {
        for v in fv.values() {
            match v {
                Some(x) => {
                    bytes.push(1);
                    bytes.extend_from_slice(&x.to_bits().to_le_bytes());
                }
                None => bytes.push(0),
            }
        }
        bytes.push(*y);
    }
    crate::sha256_hex(&bytes)
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Stratified fold ids for one repetition.
fn fold_assignment(labels: &[u8], folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assign = vec![0; labels.len()];
    let mut offset = 0;
    for class in [0u8, 1] {
        let mut rows: Vec<usize> = (0..labels.len()).filter(|i| labels[*i] == class).collect();
        rows.shuffle(&mut rng);
        for (k, r) in rows.into_iter().enumerate() {
            assign[r] = (k + offset) % folds;
        }
        // continue the round-robin so small classes do not pile into fold 0
        offset += labels.iter().filter(|l| **l == class).count();
    }
    assign
}

struct MemberRun {
    member: Member,
    holdout: Vec<usize>,
    /// `holdout_margin[t][i]`: margin of hold-out row `i` after `t + 1` rounds.
    holdout_margin: Vec<Vec<f64>>,
    budget_hit: bool,
}

#[allow(clippy::too_many_arguments)]
fn run_member(
    columns: &[Vec<f64>],
    labels: &[u8],
    folds_of_rep: &[usize],
    repetition: usize,
    fold: usize,
    seed: u64,
    cfg: &TrainConfig,
    deadline: Instant,
) -> MemberRun {
    let n = labels.len();
    let train: Vec<u32> = (0..n).filter(|r| folds_of_rep[*r] != fold).map(|r| r as u32).collect();
    let holdout: Vec<usize> = (0..n).filter(|r| folds_of_rep[*r] == fold).collect();
    let data = Presorted::new(columns, &train);
    let params = TreeParams {
        max_depth: cfg.max_depth,
        lambda: cfg.lambda,
        min_child_weight: cfg.min_child_weight,
        min_split_gain: cfg.min_split_gain,
    };

    let pos = train.iter().filter(|r| labels[**r as usize] == 1).count() as f64;
    let prior = (pos / train.len() as f64).clamp(1e-6, 1.0 - 1e-6);
    let base_score = (prior / (1.0 - prior)).ln();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut margin = vec![base_score; n];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut in_sample = vec![false; n];
    let mut hold_margin = vec![base_score; holdout.len()];
    let mut holdout_margin = Vec::with_capacity(cfg.rounds);
    let mut trees = Vec::with_capacity(cfg.rounds);
    let mut row = [0.0; FEATURE_COUNT];
    let mut budget_hit = false;

    for _ in 0..cfg.rounds {
        if Instant::now() >= deadline {
            budget_hit = true;
            break;
        }
        for &r in &train {
            let r = r as usize;
            let p = sigmoid(margin[r]);
            grad[r] = p - f64::from(labels[r]);
            hess[r] = (p * (1.0 - p)).max(1e-16);
            in_sample[r] = cfg.subsample >= 1.0 || rng.random::<f64>() < cfg.subsample;
        }
        let tree = fit_tree(&data, &in_sample, &grad, &hess, &params);
        for &r in &train {
            let r = r as usize;
            for (f, col) in columns.iter().enumerate() {
                row[f] = col[r];
            }
            margin[r] += cfg.learning_rate * tree.predict(&row);
        }
        for (i, &r) in holdout.iter().enumerate() {
            for (f, col) in columns.iter().enumerate() {
                row[f] = col[r];
            }
            hold_margin[i] += cfg.learning_rate * tree.predict(&row);
        }
        holdout_margin.push(hold_margin.clone());
        trees.push(tree);
    }

    MemberRun {
        member: Member {
            seed,
            repetition,
            fold,
            base_score,
            trees,
        },
        holdout,
        holdout_margin,
        budget_hit,
    }
}

/// Trains the bagged ensemble.
///
/// Every member boosts on its fold complement; the common round count is
/// the one maximizing out-of-fold AP and the threshold follows
/// `config.threshold_rule` on out-of-fold probabilities.
pub fn train(
    features: &[FeatureVector],
    labels: &[u8],
    config: &TrainConfig,
) -> Result<MatchModel, MatchModelError> {
    config.validate()?;
    check_lengths(features, labels)?;
    if features.len() < MIN_TRAIN_SAMPLES {
        return Err(MatchModelError::TooFewSamples {
            found: features.len(),
            required: MIN_TRAIN_SAMPLES,
        });
    }
    let positives = labels.iter().filter(|l| **l == 1).count();
    if positives == 0 || positives == labels.len() {
        return Err(MatchModelError::SingleClassDataset);
    }
    let missing: usize = features.iter().map(FeatureVector::missing_count).sum();
    if missing > 0 && !config.allow_missing {
        let rows = features.iter().filter(|f| f.has_missing()).count();
        return Err(MatchModelError::MissingValues { rows, values: missing });
    }
    let started = Instant::now();
    let deadline = started + Duration::from_secs_f64(config.time_budget_s);

    let medians: Vec<f64> = (0..FEATURE_COUNT)
        .map(|f| median(features.iter().filter_map(|fv| fv.values()[f]).collect()))
        .collect();
    let columns: Vec<Vec<f64>> = (0..FEATURE_COUNT)
        .map(|f| {
            features
                .iter()
                .map(|fv| fv.values()[f].unwrap_or(medians[f]))
                .collect()
        })
        .collect();

    let repetitions = config.bags.div_ceil(config.cv_folds);
    let fold_ids: Vec<Vec<usize>> = (0..repetitions)
        .map(|r| fold_assignment(labels, config.cv_folds, derive_seed(config.seed, 1_000_000 + r as u64)))
        .collect();

    let runs: Vec<MemberRun> = (0..config.bags)
        .into_par_iter()
        .map(|m| {
            let (rep, fold) = (m / config.cv_folds, m % config.cv_folds);
            run_member(
                &columns,
                labels,
                &fold_ids[rep],
                rep,
                fold,
                derive_seed(config.seed, m as u64),
                config,
                deadline,
            )
        })
        .collect();

    if runs.iter().any(|r| r.member.trees.is_empty()) {
        return Err(MatchModelError::BudgetTooSmall {
            budget_s: config.time_budget_s,
        });
    }
    let completed = runs.iter().map(|r| r.member.trees.len()).min().unwrap_or(0);

    let oof_at = |t: usize| -> Vec<Vec<(usize, f64)>> {
        let mut per_rep = vec![Vec::new(); repetitions];
        for run in &runs {
            for (i, &r) in run.holdout.iter().enumerate() {
                per_rep[run.member.repetition].push((r, sigmoid(run.holdout_margin[t - 1][i])));
            }
        }
        per_rep
    };
    let mean_ap = |t: usize| -> f64 {
        let aps: Vec<f64> = oof_at(t)
            .iter()
            .filter_map(|rows| {
                let s: Vec<f64> = rows.iter().map(|x| x.1).collect();
                let y: Vec<u8> = rows.iter().map(|x| labels[x.0]).collect();
                average_precision(&s, &y)
            })
            .collect();
        aps.iter().sum::<f64>() / aps.len().max(1) as f64
    };

    let mut selected = 1;
    let mut best_ap = f64::NEG_INFINITY;
    for t in 1..=completed {
        let ap = mean_ap(t);
        if ap > best_ap {
            best_ap = ap;
            selected = t;
        }
    }

    // pooled out-of-fold probability per row
    let mut sum = vec![0.0; labels.len()];
    let mut count = vec![0usize; labels.len()];
    for rows in oof_at(selected) {
        for (r, p) in rows {
            sum[r] += p;
            count[r] += 1;
        }
    }
    let covered: Vec<usize> = (0..labels.len()).filter(|r| count[*r] > 0).collect();
    let oof_scores: Vec<f64> = covered.iter().map(|r| sum[*r] / count[*r] as f64).collect();
    let oof_labels: Vec<u8> = covered.iter().map(|r| labels[*r]).collect();
    let threshold = match config.threshold_rule {
        ThresholdRule::MaxF1 => max_f1_threshold(&oof_scores, &oof_labels).0,
        ThresholdRule::Fixed { value } => value,
    };
    let oof_decisions: Vec<u8> = oof_scores.iter().map(|p| u8::from(*p >= threshold)).collect();

    let member_logs = runs
        .iter()
        .map(|run| {
            let s: Vec<f64> = run.holdout_margin[selected - 1].iter().map(|m| sigmoid(*m)).collect();
            let y: Vec<u8> = run.holdout.iter().map(|r| labels[*r]).collect();
            MemberLog {
                repetition: run.member.repetition,
                fold: run.member.fold,
                rounds_completed: run.member.trees.len(),
                holdout_ap: average_precision(&s, &y),
            }
        })
        .collect();
    let budget_exhausted = runs.iter().any(|r| r.budget_hit);
    let members = runs
        .into_iter()
        .map(|mut r| {
            r.member.trees.truncate(selected);
            r.member
        })
        .collect();

    Ok(MatchModel {
        schema_version: FEATURE_SCHEMA_VERSION,
        feature_names: FEATURE_NAMES.iter().map(|s| (*s).to_owned()).collect(),
        threshold,
        seed: config.seed,
        dataset_hash: dataset_hash(features, labels),
        learning_rate: config.learning_rate,
        medians,
        members,
        config: config.clone(),
        log: TrainingLog {
            samples: labels.len(),
            positives,
            imputed_values: missing,
            members: member_logs,
            selected_rounds: selected,
            oof_average_precision: best_ap,
            oof_report: EvalReport::from_decisions(&oof_decisions, &oof_labels),
            budget_exhausted,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_are_stratified_and_balanced() {
        let labels: Vec<u8> = (0..103).map(|i| u8::from(i % 4 == 0)).collect();
        let f = fold_assignment(&labels, 5, 9);
        for k in 0..5 {
            let size = f.iter().filter(|x| **x == k).count();
            assert!((20..=21).contains(&size), "fold {k} size {size}");
            let pos = (0..labels.len()).filter(|i| f[*i] == k && labels[*i] == 1).count();
            assert!((5..=6).contains(&pos));
        }
    }

    #[test]
    fn derived_seeds_differ() {
        let s: Vec<u64> = (0..10).map(|i| derive_seed(42, i)).collect();
        let mut u = s.clone();
        u.sort_unstable();
        u.dedup();
        assert_eq!(u.len(), s.len());
        assert_eq!(derive_seed(42, 3), s[3]);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(median(vec![]), 0.0);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            bags: 3,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            threshold_rule: ThresholdRule::Fixed { value: 1.0 },
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
