//! External oracles: direct pair matching by a generation model, and ICD
//! code assignment by retrieval plus selection. Every decision goes through
//! a [`DecisionCache`] so reruns replay without network calls.

mod cache;
mod client;
mod direct;
mod prompts;
mod rag;

use thiserror::Error;

use crate::transport::TransportError;

pub use cache::{CacheEntry, DecisionCache};
pub use client::{
    GenerationClient, HttpGenerationClient, ScriptedClient, ScriptedPair, ScriptedSelection,
    StubScript,
};
pub use direct::{direct_match_query, parse_yes_no, DirectMatchOracle};
pub use prompts::{numbered_list, PromptTemplate};
pub use rag::{
    build_rag_index, icd_pair_feature, parse_selection, AssignmentRoute, IcdAssignment,
    IcdPairDecision, IcdRagOracle, IcdSelector, Neighbor, RagIndex, DEFAULT_TOP_K,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("ICD catalog is empty")]
    EmptyCatalog,
    #[error("embedding failed for `{code}`: {reason}")]
    ProviderFailure { code: String, reason: String },
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("{oracle}: unparseable response {response:?}")]
    UnparseableResponse { oracle: String, response: String },
    #[error("ICD code `{0}` is shorter than 3 characters")]
    CodeTooShort(String),
    #[error("decision cache: {0}")]
    Cache(String),
    #[error("decision cache line {line} is corrupt")]
    CacheCorrupt { line: usize },
    #[error("prompt template: {0}")]
    Template(String),
}
