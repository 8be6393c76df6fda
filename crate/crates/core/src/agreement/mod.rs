//! Agreement metrics between an algorithm and an expert panel: multiplicity
//! and characteristic, pairwise P/R@k, optimistic and averaged relative
//! metrics with their hardness blend (RPAD/RRAD), σ estimators, and Cohen's
//! κ on top-1 diagnoses.
//!
//! Conventions:
//! - the match function is called as `m(algorithm item, expert item)` for
//!   algorithm-expert pairs and `m(lower-index expert, other)` for expert
//!   pairs, then combined per [`Symmetrize`];
//! - relative metrics with a zero denominator are errors, never infinity.

mod decisions;
mod engine;
mod kappa;
mod matchfn;
mod variance;

use thiserror::Error;

pub use decisions::{required_comparisons, DecisionMatrix, DecisionRecord};
pub use engine::{
    averaged_relative, characteristic, flag, multiplicity, optimistic_relative, pairwise,
    pairwise_precision, pairwise_recall, pairwise_table, relative_from_values, relative_report,
    rpad, rrad, Metric, MetricConfig, PairKind, PairStats, PairwiseRow, PairwiseTable,
    RelativeReport, RelativeValue, ShortBagPolicy,
};
pub use kappa::{
    cohen_kappa, kappa_from_labels, kappa_report, kappa_sigma, top1_categories, CategoryModel,
    KappaReport, KappaRow, KappaValue,
};
pub use matchfn::{ConstMatcher, ExactMatcher, MatchFn, Symmetrize, TableMatcher};
pub use variance::{algo_sigma, expert_sigma, VarianceReport};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgreementError {
    #[error("bag of {len} item(s) shorter than k = {k}{}", location(.case_id, .rater_id))]
    ShortBag {
        case_id: Option<String>,
        rater_id: Option<String>,
        len: usize,
        k: usize,
    },
    #[error("{metric:?} denominator is zero at H = {hardness}: experts never agree")]
    DegenerateDenominator { metric: Metric, hardness: f64 },
    #[error("{found} expert(s); at least {required} required")]
    TooFewExperts { found: usize, required: usize },
    #[error("dataset has no cases")]
    EmptyDataset,
    #[error("invalid metric config: {0}")]
    InvalidConfig(String),
    #[error("case {case_id}: no decision for ({a:?}, {b:?})")]
    MissingDecision { case_id: String, a: String, b: String },
    #[error("conflicting decisions for ({a:?}, {b:?})")]
    ConflictingDecision { a: String, b: String },
    #[error("decision file line {line}: {reason}")]
    DecisionFile { line: usize, reason: String },
}

fn location(case_id: &Option<String>, rater_id: &Option<String>) -> String {
    match (case_id, rater_id) {
        (Some(c), Some(r)) => format!(" (case {c}, rater {r})"),
        (Some(c), None) => format!(" (case {c})"),
        _ => String::new(),
    }
}
