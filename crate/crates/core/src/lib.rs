//! Relative precision and recall of algorithmic diagnostics (RPAD/RRAD)
//! measured against a panel of experts, plus the learned diagnosis match
//! function the metrics are built on.
//!
//! Modules, bottom-up:
//!
//! - [`corpus`]: panels, labeled pairs and the ICD catalog, with loaders.
//! - [`normalizer`]: deterministic text normalization.
//! - [`lingfeat`]: linguistic and embedding pair features, feature schema.
//! - [`oracles`]: generation-model and ICD-retrieval features with a replay cache.
//! - [`matchmodel`]: bagged gradient-boosted trees realizing the match function.
//! - [`pipeline`]: assembles oracle and linguistic features for a pair.
//! - [`agreement`]: multiplicity, pairwise P/R@k, relative metrics, σ estimators, κ.

pub mod agreement;
pub mod corpus;
pub mod lingfeat;
pub mod matchmodel;
pub mod normalizer;
pub mod oracles;
pub mod pipeline;
pub mod transport;

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}
