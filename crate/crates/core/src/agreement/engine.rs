use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::matchfn::{MatchFn, Symmetrize};
use super::AgreementError;
use crate::corpus::{DiagnosisBag, EvaluationDataset, RaterKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShortBagPolicy {
    /// A bag with fewer than k items is an error.
    #[default]
    Strict,
    /// Use the items present; the n·k² normalizer is unchanged.
    Penalize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricConfig {
    pub k: usize,
    pub hardness: f64,
    pub short_bag_policy: ShortBagPolicy,
    pub symmetrize: Symmetrize,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            k: 1,
            hardness: 1.0,
            short_bag_policy: ShortBagPolicy::Strict,
            symmetrize: Symmetrize::AsIs,
        }
    }
}

impl MetricConfig {
    pub fn with_k(self, k: usize) -> Self {
        Self { k, ..self }
    }

    pub fn with_hardness(self, hardness: f64) -> Self {
        Self { hardness, ..self }
    }

    pub fn validate(&self, k_max: usize) -> Result<(), AgreementError> {
        if self.k == 0 || self.k > k_max {
            return Err(AgreementError::InvalidConfig(format!(
                "k = {} outside 1..={k_max}",
                self.k
            )));
        }
        if !(0.0..=1.0).contains(&self.hardness) {
            return Err(AgreementError::InvalidConfig(format!(
                "hardness {} outside [0, 1]",
                self.hardness
            )));
        }
        Ok(())
    }
}

fn truncated<'a>(bag: &'a DiagnosisBag, cfg: &MetricConfig) -> Result<&'a [crate::corpus::Diagnosis], usize> {
    if bag.len() < cfg.k && cfg.short_bag_policy == ShortBagPolicy::Strict {
        return Err(bag.len());
    }
    Ok(bag.truncated(cfg.k))
}

/// μ: number of matching `(p, q)` pairs among the first k items of each bag,
/// with `a` items as the first argument of `m`.
pub fn multiplicity(
    a: &DiagnosisBag,
    b: &DiagnosisBag,
    m: &dyn MatchFn,
    cfg: &MetricConfig,
) -> Result<u32, AgreementError> {
    let short = |len| AgreementError::ShortBag {
        case_id: None,
        rater_id: None,
        len,
        k: cfg.k,
    };
    let xa = truncated(a, cfg).map_err(short)?;
    let xb = truncated(b, cfg).map_err(short)?;
    let mut mu = 0;
    for p in xa {
        for q in xb {
            mu += u32::from(cfg.symmetrize.apply(m, p.text(), q.text()));
        }
    }
    Ok(mu)
}

/// χ: 1 iff μ > 0.
pub fn characteristic(
    a: &DiagnosisBag,
    b: &DiagnosisBag,
    m: &dyn MatchFn,
    cfg: &MetricConfig,
) -> Result<u32, AgreementError> {
    Ok(u32::from(multiplicity(a, b, m, cfg)? > 0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairStats {
    pub precision: f64,
    pub recall: f64,
    pub mu_sum: u64,
    pub chi_sum: u64,
}

/// P@k and R@k for raters `x` (first argument of `m`) and `y`.
pub fn pairwise(
    ds: &EvaluationDataset,
    x: usize,
    y: usize,
    m: &dyn MatchFn,
    cfg: &MetricConfig,
) -> Result<PairStats, AgreementError> {
    cfg.validate(ds.k_max())?;
    let n = ds.n_cases();
    if n == 0 {
        return Err(AgreementError::EmptyDataset);
    }
    let (mut mu_sum, mut chi_sum) = (0u64, 0u64);
    for c in 0..n {
        let mu = multiplicity(ds.bag(x, c), ds.bag(y, c), m, cfg).map_err(|e| match e {
            AgreementError::ShortBag { len, k, .. } => {
                let rater = if ds.bag(x, c).len() < k { x } else { y };
                AgreementError::ShortBag {
                    case_id: Some(ds.cases()[c].case_id.clone()),
                    rater_id: Some(ds.raters()[rater].id.clone()),
                    len,
                    k,
                }
            }
            other => other,
        })?;
        mu_sum += u64::from(mu);
        chi_sum += u64::from(mu > 0);
    }
    let k2 = (cfg.k * cfg.k) as f64;
    Ok(PairStats {
        precision: mu_sum as f64 / (n as f64 * k2),
        recall: chi_sum as f64 / n as f64,
        mu_sum,
        chi_sum,
    })
}

pub fn pairwise_precision(
    ds: &EvaluationDataset,
    x: usize,
    y: usize,
    m: &dyn MatchFn,
    cfg: &MetricConfig,
) -> Result<f64, AgreementError> {
    pairwise(ds, x, y, m, cfg).map(|s| s.precision)
}

pub fn pairwise_recall(
    ds: &EvaluationDataset,
    x: usize,
    y: usize,
    m: &dyn MatchFn,
    cfg: &MetricConfig,
) -> Result<f64, AgreementError> {
    pairwise(ds, x, y, m, cfg).map(|s| s.recall)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Precision,
    Recall,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairKind {
    AlgorithmExpert,
    ExpertExpert,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseRow {
    pub kind: PairKind,
    /// First argument of the match function.
    pub rater_x: String,
    pub rater_y: String,
    pub precision: f64,
    pub recall: f64,
}

/// Pairwise values for one k: z algorithm-expert rows (expert order), then
/// z(z-1)/2 expert-expert rows in `(i, j)`, `i < j` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseTable {
    pub k: usize,
    pub n_cases: usize,
    pub n_experts: usize,
    pub rows: Vec<PairwiseRow>,
}

impl PairwiseTable {
    fn value(row: &PairwiseRow, metric: Metric) -> f64 {
        match metric {
            Metric::Precision => row.precision,
            Metric::Recall => row.recall,
        }
    }

    pub fn algorithm_rows(&self) -> &[PairwiseRow] {
        &self.rows[..self.n_experts]
    }

    pub fn expert_rows(&self) -> &[PairwiseRow] {
        &self.rows[self.n_experts..]
    }

    pub fn ae_values(&self, metric: Metric) -> Vec<f64> {
        self.algorithm_rows().iter().map(|r| Self::value(r, metric)).collect()
    }

    pub fn ee_values(&self, metric: Metric) -> Vec<f64> {
        self.expert_rows().iter().map(|r| Self::value(r, metric)).collect()
    }

    /// Symmetric z×z matrix of expert-pair values; the diagonal is unused.
    #[allow(clippy::needless_range_loop)] // fills both triangles
    pub fn ee_matrix(&self, metric: Metric) -> Vec<Vec<f64>> {
        let z = self.n_experts;
        let mut out = vec![vec![0.0; z]; z];
        let mut it = self.expert_rows().iter();
        for i in 0..z {
            for j in i + 1..z {
                let v = Self::value(it.next().expect("z(z-1)/2 expert rows"), metric);
                out[i][j] = v;
                out[j][i] = v;
            }
        }
        out
    }
}

/// Every algorithm-expert and expert-expert pair at `cfg.k`.
pub fn pairwise_table(
    ds: &EvaluationDataset,
    m: &dyn MatchFn,
    cfg: &MetricConfig,
) -> Result<PairwiseTable, AgreementError> {
    cfg.validate(ds.k_max())?;
    let z = ds.n_experts();
    let a = ds.algorithm();
    let mut pairs: Vec<(PairKind, usize, usize)> =
        ds.experts().map(|e| (PairKind::AlgorithmExpert, a, e)).collect();
    for i in ds.experts() {
        for j in i + 1..z {
            pairs.push((PairKind::ExpertExpert, i, j));
        }
    }
    debug_assert!(ds.raters()[a].kind == RaterKind::Algorithm);
    let rows = pairs
        .par_iter()
        .map(|&(kind, x, y)| {
            let s = pairwise(ds, x, y, m, cfg)?;
            Ok(PairwiseRow {
                kind,
                rater_x: ds.raters()[x].id.clone(),
                rater_y: ds.raters()[y].id.clone(),
                precision: s.precision,
                recall: s.recall,
            })
        })
        .collect::<Result<Vec<_>, AgreementError>>()?;
    Ok(PairwiseTable {
        k: cfg.k,
        n_cases: ds.n_cases(),
        n_experts: z,
        rows,
    })
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn max(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn min(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

/// `(1 - h) * extreme + h * mean`, the one expression every relative
/// metric goes through. At h = 0 and h = 1 it returns `extreme` and `mean`
/// unchanged.
fn blend(h: f64, extreme: f64, mean: f64) -> f64 {
    (1.0 - h) * extreme + h * mean
}

/// `blend(h, max AE, mean AE) / blend(h, min EE, mean EE)`.
pub fn relative_from_values(ae: &[f64], ee: &[f64], h: f64, metric: Metric) -> Result<f64, AgreementError> {
    if ae.is_empty() || ee.is_empty() {
        return Err(AgreementError::TooFewExperts {
            found: ae.len(),
            required: 2,
        });
    }
    let num = blend(h, max(ae), mean(ae));
    let den = blend(h, min(ee), mean(ee));
    if den <= 0.0 {
        return Err(AgreementError::DegenerateDenominator { metric, hardness: h });
    }
    Ok(num / den)
}

impl PairwiseTable {
    pub fn relative(&self, metric: Metric, h: f64) -> Result<f64, AgreementError> {
        if !(0.0..=1.0).contains(&h) {
            return Err(AgreementError::InvalidConfig(format!("hardness {h} outside [0, 1]")));
        }
        relative_from_values(&self.ae_values(metric), &self.ee_values(metric), h, metric)
    }

    pub fn optimistic(&self, metric: Metric) -> Result<f64, AgreementError> {
        self.relative(metric, 0.0)
    }

    pub fn averaged(&self, metric: Metric) -> Result<f64, AgreementError> {
        self.relative(metric, 1.0)
    }
}

fn table_checked(ds: &EvaluationDataset, m: &dyn MatchFn, cfg: &MetricConfig) -> Result<PairwiseTable, AgreementError> {
    if ds.n_experts() < 2 {
        return Err(AgreementError::TooFewExperts {
            found: ds.n_experts(),
            required: 2,
        });
    }
    pairwise_table(ds, m, cfg)
}

/// `(P_opt, R_opt)`.
pub fn optimistic_relative(
    ds: &EvaluationDataset,
    m: &dyn MatchFn,
    cfg: &MetricConfig,
) -> Result<(f64, f64), AgreementError> {
    let t = table_checked(ds, m, cfg)?;
    Ok((t.optimistic(Metric::Precision)?, t.optimistic(Metric::Recall)?))
}

/// `(P_avg, R_avg)`.
pub fn averaged_relative(
    ds: &EvaluationDataset,
    m: &dyn MatchFn,
    cfg: &MetricConfig,
) -> Result<(f64, f64), AgreementError> {
    let t = table_checked(ds, m, cfg)?;
    Ok((t.averaged(Metric::Precision)?, t.averaged(Metric::Recall)?))
}

/// RPAD@k at `cfg.hardness`.
pub fn rpad(ds: &EvaluationDataset, m: &dyn MatchFn, cfg: &MetricConfig) -> Result<f64, AgreementError> {
    table_checked(ds, m, cfg)?.relative(Metric::Precision, cfg.hardness)
}

/// RRAD@k at `cfg.hardness`.
pub fn rrad(ds: &EvaluationDataset, m: &dyn MatchFn, cfg: &MetricConfig) -> Result<f64, AgreementError> {
    table_checked(ds, m, cfg)?.relative(Metric::Recall, cfg.hardness)
}

/// "+" iff the value exceeds 1.
pub fn flag(value: f64) -> &'static str {
    if value > 1.0 {
        "+"
    } else {
        "-"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeValue {
    /// `None` when the denominator is degenerate.
    pub value: Option<f64>,
    pub flag: String,
}

impl RelativeValue {
    fn from_result(r: Result<f64, AgreementError>) -> Result<Self, AgreementError> {
        match r {
            Ok(v) => Ok(Self {
                value: Some(v),
                flag: flag(v).to_owned(),
            }),
            Err(AgreementError::DegenerateDenominator { .. }) => Ok(Self {
                value: None,
                flag: "n/a".to_owned(),
            }),
            Err(e) => Err(e),
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.value.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeReport {
    pub k: usize,
    pub hardness: f64,
    pub p_opt: RelativeValue,
    pub r_opt: RelativeValue,
    pub p_avg: RelativeValue,
    pub r_avg: RelativeValue,
    pub rpad: RelativeValue,
    pub rrad: RelativeValue,
}

impl RelativeReport {
    pub fn from_table(t: &PairwiseTable, hardness: f64) -> Result<Self, AgreementError> {
        let v = |metric, h| RelativeValue::from_result(t.relative(metric, h));
        Ok(Self {
            k: t.k,
            hardness,
            p_opt: v(Metric::Precision, 0.0)?,
            r_opt: v(Metric::Recall, 0.0)?,
            p_avg: v(Metric::Precision, 1.0)?,
            r_avg: v(Metric::Recall, 1.0)?,
            rpad: v(Metric::Precision, hardness)?,
            rrad: v(Metric::Recall, hardness)?,
        })
    }

    pub fn has_degenerate(&self) -> bool {
        [&self.p_opt, &self.r_opt, &self.p_avg, &self.r_avg, &self.rpad, &self.rrad]
            .iter()
            .any(|v| v.is_degenerate())
    }
}

/// Pairwise table and relative report for one configuration.
pub fn relative_report(
    ds: &EvaluationDataset,
    m: &dyn MatchFn,
    cfg: &MetricConfig,
) -> Result<(PairwiseTable, RelativeReport), AgreementError> {
    let t = table_checked(ds, m, cfg)?;
    let r = RelativeReport::from_table(&t, cfg.hardness)?;
    Ok((t, r))
}
