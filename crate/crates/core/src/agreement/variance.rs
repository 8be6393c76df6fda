use serde::{Deserialize, Serialize};

use super::engine::{mean, Metric, PairwiseTable};
use super::kappa::KappaReport;
use super::AgreementError;

/// Sample standard deviation (1/(z-1)) of the z algorithm-expert values.
pub fn algo_sigma(ae: &[f64]) -> Result<f64, AgreementError> {
    let z = ae.len();
    if z < 2 {
        return Err(AgreementError::TooFewExperts { found: z, required: 2 });
    }
    let m = mean(ae);
    let ss: f64 = ae.iter().map(|v| (v - m) * (v - m)).sum();
    Ok((ss / (z - 1) as f64).sqrt())
}

/// Mean over experts i of sqrt(Σ_{j≠i} (v_ij - mean_i)² / (z-2)), where
/// mean_i averages the z-1 values v_ij, j ≠ i. `ee` is a symmetric z×z
/// matrix; its diagonal is ignored.
pub fn expert_sigma(ee: &[Vec<f64>]) -> Result<f64, AgreementError> {
    let z = ee.len();
    if z < 3 {
        return Err(AgreementError::TooFewExperts { found: z, required: 3 });
    }
    let mut total = 0.0;
    for (i, row) in ee.iter().enumerate() {
        let others: Vec<f64> = (0..z).filter(|j| *j != i).map(|j| row[j]).collect();
        let m = mean(&others);
        let ss: f64 = others.iter().map(|v| (v - m) * (v - m)).sum();
        total += (ss / (z - 2) as f64).sqrt();
    }
    Ok(total / z as f64)
}

/// σ values for one k; `None` when the estimator is undefined for the panel
/// size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub k: usize,
    pub sigma_algo_precision: Option<f64>,
    pub sigma_algo_recall: Option<f64>,
    pub sigma_expert_precision: Option<f64>,
    pub sigma_expert_recall: Option<f64>,
    pub sigma_algo_kappa: Option<f64>,
    pub sigma_expert_kappa: Option<f64>,
}

impl VarianceReport {
    pub fn from_tables(t: &PairwiseTable, kappa: Option<&KappaReport>) -> Self {
        let (ka, ke) = kappa.map_or((None, None), |k| (k.algo_sigma().ok(), k.expert_sigma().ok()));
        Self {
            k: t.k,
            sigma_algo_precision: algo_sigma(&t.ae_values(Metric::Precision)).ok(),
            sigma_algo_recall: algo_sigma(&t.ae_values(Metric::Recall)).ok(),
            sigma_expert_precision: expert_sigma(&t.ee_matrix(Metric::Precision)).ok(),
            sigma_expert_recall: expert_sigma(&t.ee_matrix(Metric::Recall)).ok(),
            sigma_algo_kappa: ka,
            sigma_expert_kappa: ke,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn algo_examples() {
        assert_eq!(algo_sigma(&[0.3, 0.3, 0.3]).unwrap(), 0.0);
        let s = algo_sigma(&[0.2, 0.4]).unwrap();
        assert!((s - (2.0f64 * 0.01).sqrt()).abs() < 1e-15);
        assert!(matches!(algo_sigma(&[0.2]), Err(AgreementError::TooFewExperts { found: 1, .. })));
    }

    #[test]
    fn expert_three_by_hand() {
        // v01 = 0.2, v02 = 0.4, v12 = 0.6; z = 3 so 1/(z-2) = 1
        // expert 0: {0.2, 0.4} mean 0.3, ss 0.02
        // expert 1: {0.2, 0.6} mean 0.4, ss 0.08
        // expert 2: {0.4, 0.6} mean 0.5, ss 0.02
        let m = vec![
            vec![0.0, 0.2, 0.4],
            vec![0.2, 0.0, 0.6],
            vec![0.4, 0.6, 0.0],
        ];
        let want = (0.02f64.sqrt() + 0.08f64.sqrt() + 0.02f64.sqrt()) / 3.0;
        assert!((expert_sigma(&m).unwrap() - want).abs() < 1e-12);
        let flat = vec![vec![0.5; 3]; 3];
        assert_eq!(expert_sigma(&flat).unwrap(), 0.0);
        assert!(matches!(
            expert_sigma(&[vec![0.0, 1.0], vec![1.0, 0.0]]),
            Err(AgreementError::TooFewExperts { found: 2, required: 3 })
        ));
    }
}
