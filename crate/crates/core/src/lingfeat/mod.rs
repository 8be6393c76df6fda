//! Pair features: embedding cosines, linguistic overlap ratios, normalized
//! edit distance, and the 17-slot feature vector that feeds the match model.

mod embedding;
mod features;
mod similarity;
mod tokens;

use thiserror::Error;

pub use embedding::{EmbeddingProvider, HashingEmbedder, HttpEmbeddingProvider, ProviderError};
pub use features::{
    build_feature_vector, read_feature_csv, write_feature_csv, FeatureNote, FeatureRow,
    FeatureVector, NoteKind, OracleDecisions, Slot, FEATURE_COUNT, FEATURE_NAMES,
    FEATURE_SCHEMA_VERSION, RESERVED_SLOT_VALUE,
};
pub use similarity::{cosine_similarity, levenshtein, normalized_levenshtein, overlap_ratio};
pub use tokens::{token_profile, BackendConfig, LinguisticBackend, RuleBackend, TokenProfile};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LingError {
    #[error("input text is empty")]
    EmptyInput,
    #[error("linguistic backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("overlap ratio of an empty set")]
    EmptySetOperand,
    #[error("vector dimensions differ ({left} vs {right})")]
    DimensionMismatch { left: usize, right: usize },
    #[error("zero-norm vector")]
    ZeroVector,
    #[error("diagnosis has not been normalized")]
    NotNormalized,
    #[error("feature schema version {found}, expected {expected}")]
    SchemaVersion { found: u32, expected: u32 },
    #[error("feature file line {line}: {reason}")]
    FeatureFile { line: usize, reason: String },
}
