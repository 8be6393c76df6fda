//! The match function M: a bagged ensemble of gradient-boosted trees over
//! the 17-slot feature schema, with evaluation, permutation importance and
//! a checksummed model file.

mod importance;
mod io;
mod metrics;
mod synthetic;
mod train;
mod tree;

use thiserror::Error;

pub use importance::{
    feature_correlation, permutation_importance, CorrelatedPair, CorrelationReport,
    FeatureImportance, ImportanceReport, MIN_IMPORTANCE_ROWS,
};
pub use io::{from_bytes, load, save, to_bytes, ModelHeader, MODEL_FORMAT_VERSION, MODEL_MAGIC};
pub use metrics::{average_precision, max_f1_threshold, EvalReport};
pub use synthetic::{separable_pairs, SyntheticSet};
pub use train::{
    dataset_hash, train, MatchModel, Member, MemberLog, ThresholdRule, TrainConfig, TrainingLog,
    MIN_TRAIN_SAMPLES,
};
pub use tree::Tree;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatchModelError {
    #[error("training labels contain a single class")]
    SingleClassDataset,
    #[error("{found} samples, at least {required} required")]
    TooFewSamples { found: usize, required: usize },
    #[error("{features} feature rows but {labels} labels")]
    LengthMismatch { features: usize, labels: usize },
    #[error("row {row}: label {value} is not 0 or 1")]
    InvalidLabel { row: usize, value: u8 },
    #[error("{values} missing value(s) in {rows} row(s); enable allow_missing to impute medians")]
    MissingValues { rows: usize, values: usize },
    #[error("feature schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("time budget of {budget_s} s too small to fit one round per member")]
    BudgetTooSmall { budget_s: f64 },
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("{what} version {found} unsupported (expected {expected})")]
    VersionMismatch {
        what: &'static str,
        found: u32,
        expected: u32,
    },
    #[error("corrupt model file: {0}")]
    CorruptFile(String),
    #[error("io: {0}")]
    Io(String),
}
