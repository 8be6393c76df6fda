use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::engine::PairKind;
use super::matchfn::{MatchFn, Symmetrize};
use super::variance::{algo_sigma, expert_sigma};
use super::AgreementError;
use crate::corpus::EvaluationDataset;

/// How top-1 diagnoses are grouped into κ categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CategoryModel {
    /// One category per distinct normalized string.
    #[default]
    Exact,
    /// Transitive closure of match decisions between top-1 diagnoses given
    /// to the same case.
    MatchClustered,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaValue {
    pub kappa: f64,
    pub p_o: f64,
    pub p_e: f64,
    /// p_e = 1; κ set to 1 if p_o = 1, else 0.
    pub degenerate: bool,
}

/// Cohen's κ over two category sequences of equal, non-zero length.
pub fn kappa_from_labels(x: &[usize], y: &[usize]) -> Result<KappaValue, AgreementError> {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    if n == 0 {
        return Err(AgreementError::EmptyDataset);
    }
    let mut cx: HashMap<usize, u64> = HashMap::new();
    let mut cy: HashMap<usize, u64> = HashMap::new();
    let mut agree = 0u64;
    for (a, b) in x.iter().zip(y) {
        *cx.entry(*a).or_default() += 1;
        *cy.entry(*b).or_default() += 1;
        agree += u64::from(a == b);
    }
    let chance: u64 = cx.iter().map(|(c, nx)| nx * cy.get(c).copied().unwrap_or(0)).sum();
    let n = n as u64;
    let p_o = agree as f64 / n as f64;
    let p_e = chance as f64 / (n * n) as f64;
    if chance == n * n {
        return Ok(KappaValue {
            kappa: if agree == n { 1.0 } else { 0.0 },
            p_o,
            p_e,
            degenerate: true,
        });
    }
    Ok(KappaValue {
        kappa: (p_o - p_e) / (1.0 - p_e),
        p_o,
        p_e,
        degenerate: false,
    })
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, mut i: usize) -> usize {
        while self.0[i] != i {
            self.0[i] = self.0[self.0[i]];
            i = self.0[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        // smaller root wins so ids do not depend on union order
        if ra < rb {
            self.0[rb] = ra;
        } else {
            self.0[ra] = rb;
        }
    }
}

/// Ordered rater pairs: algorithm first against each expert, then experts
/// `(i, j)` with `i < j`.
pub(crate) fn rater_pairs(ds: &EvaluationDataset) -> Vec<(PairKind, usize, usize)> {
    let a = ds.algorithm();
    let mut pairs: Vec<(PairKind, usize, usize)> =
        ds.experts().map(|e| (PairKind::AlgorithmExpert, a, e)).collect();
    for i in ds.experts() {
        for j in i + 1..ds.n_experts() {
            pairs.push((PairKind::ExpertExpert, i, j));
        }
    }
    pairs
}

/// `categories[rater][case]`: category id of that rater's top-1 diagnosis.
pub fn top1_categories(
    ds: &EvaluationDataset,
    model: CategoryModel,
    m: &dyn MatchFn,
    symmetrize: Symmetrize,
) -> Vec<Vec<usize>> {
    let mut ids: BTreeMap<&str, usize> = BTreeMap::new();
    for r in 0..ds.raters().len() {
        for c in 0..ds.n_cases() {
            ids.entry(ds.bag(r, c).top().text()).or_insert(0);
        }
    }
    for (i, v) in ids.values_mut().enumerate() {
        *v = i;
    }
    let id = |r: usize, c: usize| ids[ds.bag(r, c).top().text()];
    let mut uf = UnionFind((0..ids.len()).collect());
    if model == CategoryModel::MatchClustered {
        let pairs = rater_pairs(ds);
        for c in 0..ds.n_cases() {
            for &(_, x, y) in &pairs {
                let (tx, ty) = (ds.bag(x, c).top().text(), ds.bag(y, c).top().text());
                if symmetrize.apply(m, tx, ty) {
                    uf.union(id(x, c), id(y, c));
                }
            }
        }
    }
    (0..ds.raters().len())
        .map(|r| (0..ds.n_cases()).map(|c| uf.find(id(r, c))).collect())
        .collect()
}

pub fn cohen_kappa(
    ds: &EvaluationDataset,
    x: usize,
    y: usize,
    model: CategoryModel,
    m: &dyn MatchFn,
    symmetrize: Symmetrize,
) -> Result<KappaValue, AgreementError> {
    if ds.n_cases() == 0 {
        return Err(AgreementError::EmptyDataset);
    }
    let cats = top1_categories(ds, model, m, symmetrize);
    kappa_from_labels(&cats[x], &cats[y])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaRow {
    pub kind: PairKind,
    pub rater_x: String,
    pub rater_y: String,
    pub kappa: f64,
    pub p_o: f64,
    pub p_e: f64,
    pub degenerate: bool,
}

/// κ for every rater pair, in the same row order as the pairwise table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaReport {
    pub category_model: CategoryModel,
    pub n_experts: usize,
    pub rows: Vec<KappaRow>,
}

impl KappaReport {
    pub fn ae_values(&self) -> Vec<f64> {
        self.rows[..self.n_experts].iter().map(|r| r.kappa).collect()
    }

    #[allow(clippy::needless_range_loop)] // fills both triangles
    pub fn ee_matrix(&self) -> Vec<Vec<f64>> {
        let z = self.n_experts;
        let mut out = vec![vec![0.0; z]; z];
        let mut it = self.rows[z..].iter();
        for i in 0..z {
            for j in i + 1..z {
                let v = it.next().expect("z(z-1)/2 expert rows").kappa;
                out[i][j] = v;
                out[j][i] = v;
            }
        }
        out
    }

    pub fn algo_sigma(&self) -> Result<f64, AgreementError> {
        algo_sigma(&self.ae_values())
    }

    pub fn expert_sigma(&self) -> Result<f64, AgreementError> {
        expert_sigma(&self.ee_matrix())
    }

    pub fn degenerate_count(&self) -> usize {
        self.rows.iter().filter(|r| r.degenerate).count()
    }
}

pub fn kappa_report(
    ds: &EvaluationDataset,
    model: CategoryModel,
    m: &dyn MatchFn,
    symmetrize: Symmetrize,
) -> Result<KappaReport, AgreementError> {
    if ds.n_cases() == 0 {
        return Err(AgreementError::EmptyDataset);
    }
    let cats = top1_categories(ds, model, m, symmetrize);
    let rows = rater_pairs(ds)
        .into_iter()
        .map(|(kind, x, y)| {
            let v = kappa_from_labels(&cats[x], &cats[y])?;
            Ok(KappaRow {
                kind,
                rater_x: ds.raters()[x].id.clone(),
                rater_y: ds.raters()[y].id.clone(),
                kappa: v.kappa,
                p_o: v.p_o,
                p_e: v.p_e,
                degenerate: v.degenerate,
            })
        })
        .collect::<Result<Vec<_>, AgreementError>>()?;
    Ok(KappaReport {
        category_model: model,
        n_experts: ds.n_experts(),
        rows,
    })
}

/// `(σ^A_κ, mean expert σ_κ)`.
pub fn kappa_sigma(
    ds: &EvaluationDataset,
    model: CategoryModel,
    m: &dyn MatchFn,
    symmetrize: Symmetrize,
) -> Result<(f64, f64), AgreementError> {
    let r = kappa_report(ds, model, m, symmetrize)?;
    Ok((r.algo_sigma()?, r.expert_sigma()?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_agreement_two_categories() {
        let v = kappa_from_labels(&[0, 1, 0, 1], &[0, 1, 0, 1]).unwrap();
        assert_eq!((v.p_o, v.p_e, v.kappa, v.degenerate), (1.0, 0.5, 1.0, false));
    }

    #[test]
    fn single_shared_category_is_degenerate() {
        let v = kappa_from_labels(&[3; 5], &[3; 5]).unwrap();
        assert!(v.degenerate);
        assert_eq!(v.kappa, 1.0);
    }

    #[test]
    fn hand_computed() {
        // p_o = 3/4; marginals x: {0: 2, 1: 2}, y: {0: 3, 1: 1}
        // p_e = (2*3 + 2*1) / 16 = 0.5, κ = 0.25 / 0.5 = 0.5
        let v = kappa_from_labels(&[0, 0, 1, 1], &[0, 0, 0, 1]).unwrap();
        assert_eq!(v.p_o, 0.75);
        assert_eq!(v.p_e, 0.5);
        assert_eq!(v.kappa, 0.5);
    }

    #[test]
    fn complete_disagreement_bounded() {
        let v = kappa_from_labels(&[0, 1], &[1, 0]).unwrap();
        assert_eq!(v.kappa, -1.0);
    }

    #[test]
    fn empty_is_error() {
        assert_eq!(kappa_from_labels(&[], &[]).unwrap_err(), AgreementError::EmptyDataset);
    }
}
