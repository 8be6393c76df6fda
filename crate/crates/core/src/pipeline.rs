//! Pair featurization: normalization, oracle decisions through the cache,
//! embedding cosines and linguistic ratios, assembled into a
//! [`FeatureVector`]; plus the model-backed decision matrix.
//!
//! Oracle failures never abort a batch. The slot is left missing and the
//! failure is reported in [`FeatureBatch::failures`].

use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::agreement::{required_comparisons, AgreementError, DecisionMatrix, Symmetrize};
use crate::corpus::{CorpusError, Diagnosis, EvaluationDataset};
use crate::lingfeat::{
    build_feature_vector, EmbeddingProvider, FeatureVector, LingError, LinguisticBackend,
    OracleDecisions,
};
use crate::matchmodel::{MatchModel, MatchModelError};
use crate::normalizer::{normalize, NormalizationRules, NormalizeError};
use crate::oracles::{DecisionCache, DirectMatchOracle, IcdRagOracle, OracleError};

pub const MAX_DIRECT_ORACLES: usize = 5;
pub const MAX_RAG_ORACLES: usize = 2;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("pair {index}: {source}")]
    Normalize {
        index: usize,
        #[source]
        source: NormalizeError,
    },
    #[error("pair {index}: {source}")]
    Features {
        index: usize,
        #[source]
        source: LingError,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Model(#[from] MatchModelError),
    #[error(transparent)]
    Agreement(#[from] AgreementError),
    #[error("at most {max} {what} oracles fit the feature schema")]
    TooManyOracles { what: &'static str, max: usize },
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleFailure {
    pub pair_index: usize,
    pub oracle: String,
    /// True for transport exhaustion, false for unusable responses.
    pub transport: bool,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBatch {
    pub vectors: Vec<FeatureVector>,
    pub failures: Vec<OracleFailure>,
}

impl FeatureBatch {
    pub fn missing_values(&self) -> usize {
        self.vectors.iter().map(FeatureVector::missing_count).sum()
    }

    pub fn transport_failures(&self) -> usize {
        self.failures.iter().filter(|f| f.transport).count()
    }
}

pub struct PairFeaturizer {
    rules: NormalizationRules,
    backend: Arc<dyn LinguisticBackend>,
    providers: Vec<Arc<dyn EmbeddingProvider>>,
    direct: Vec<DirectMatchOracle>,
    rag: Vec<IcdRagOracle>,
    cache: Arc<DecisionCache>,
    threads: usize,
}

impl std::fmt::Debug for PairFeaturizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PairFeaturizer")
            .field("backend", &self.backend.name())
            .field("providers", &self.providers.iter().map(|p| p.name().to_owned()).collect::<Vec<_>>())
            .field("direct", &self.direct.iter().map(|o| o.id().to_owned()).collect::<Vec<_>>())
            .field("rag", &self.rag.iter().map(|o| o.id().to_owned()).collect::<Vec<_>>())
            .field("threads", &self.threads)
            .finish()
    }
}

impl PairFeaturizer {
    /// No oracles, no providers, an in-memory cache and one thread per core.
    pub fn new(rules: NormalizationRules, backend: Arc<dyn LinguisticBackend>) -> Self {
        Self {
            rules,
            backend,
            providers: Vec::new(),
            direct: Vec::new(),
            rag: Vec::new(),
            cache: Arc::new(DecisionCache::in_memory()),
            threads: 0,
        }
    }

    /// Providers fill the cosine slots in order; extras are ignored.
    pub fn with_providers(mut self, providers: Vec<Arc<dyn EmbeddingProvider>>) -> Self {
        self.providers = providers;
        self
    }

    pub fn with_direct(mut self, oracles: Vec<DirectMatchOracle>) -> Result<Self, PipelineError> {
        if oracles.len() > MAX_DIRECT_ORACLES {
            return Err(PipelineError::TooManyOracles {
                what: "direct",
                max: MAX_DIRECT_ORACLES,
            });
        }
        self.direct = oracles;
        Ok(self)
    }

    pub fn with_rag(mut self, oracles: Vec<IcdRagOracle>) -> Result<Self, PipelineError> {
        if oracles.len() > MAX_RAG_ORACLES {
            return Err(PipelineError::TooManyOracles {
                what: "rag",
                max: MAX_RAG_ORACLES,
            });
        }
        self.rag = oracles;
        Ok(self)
    }

    pub fn with_cache(mut self, cache: Arc<DecisionCache>) -> Self {
        self.cache = cache;
        self
    }

    /// 0 means one worker per core. Output order never depends on this.
    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = threads;
        self
    }

    pub fn cache(&self) -> &Arc<DecisionCache> {
        &self.cache
    }

    pub fn rules(&self) -> &NormalizationRules {
        &self.rules
    }

    /// Generation calls issued by all oracle clients so far.
    pub fn oracle_calls(&self) -> usize {
        self.direct.iter().map(|o| o.client().calls()).sum::<usize>()
            + self.rag.iter().map(|o| o.selector().client().calls()).sum::<usize>()
    }

    fn diagnosis(&self, index: usize, text: &str) -> Result<Diagnosis, PipelineError> {
        let normalized = normalize(text, &self.rules).map_err(|source| PipelineError::Normalize { index, source })?;
        Ok(Diagnosis::with_normalized(text, normalized)?)
    }

    /// Features for one raw pair. `index` only labels errors and failures.
    pub fn featurize(
        &self,
        index: usize,
        a: &str,
        b: &str,
    ) -> Result<(FeatureVector, Vec<OracleFailure>), PipelineError> {
        let da = self.diagnosis(index, a)?;
        let db = self.diagnosis(index, b)?;
        let (ta, tb) = (da.text(), db.text());
        let mut failures = Vec::new();
        let mut fail = |oracle: &str, e: &OracleError| {
            failures.push(OracleFailure {
                pair_index: index,
                oracle: oracle.to_owned(),
                transport: matches!(e, OracleError::Transport(_)),
                message: e.to_string(),
            })
        };
        let mut decisions = OracleDecisions::missing();
        for (slot, oracle) in self.direct.iter().enumerate() {
            match oracle.query(ta, tb, &self.cache) {
                Ok(d) => decisions.direct[slot] = Some(d),
                Err(e) => fail(oracle.id(), &e),
            }
        }
        for (slot, oracle) in self.rag.iter().enumerate() {
            match oracle.query(ta, tb, &self.cache) {
                Ok(d) => decisions.rag[slot] = Some(d.decision),
                Err(e) => fail(oracle.id(), &e),
            }
        }
        let providers: Vec<&dyn EmbeddingProvider> = self.providers.iter().map(|p| p.as_ref()).collect();
        let fv = build_feature_vector(&da, &db, &decisions, &providers, self.backend.as_ref())
            .map_err(|source| PipelineError::Features { index, source })?;
        Ok((fv, failures))
    }

    /// Featurizes `pairs` in parallel; vectors and failures come back in
    /// pair order regardless of thread count.
    pub fn featurize_batch(&self, pairs: &[(String, String)]) -> Result<FeatureBatch, PipelineError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads)
            .build()
            .map_err(|e| PipelineError::ThreadPool(e.to_string()))?;
        let results: Vec<_> = pool.install(|| {
            pairs
                .par_iter()
                .enumerate()
                .map(|(i, (a, b))| self.featurize(i, a, b))
                .collect()
        });
        let mut batch = FeatureBatch {
            vectors: Vec::with_capacity(pairs.len()),
            failures: Vec::new(),
        };
        for r in results {
            let (fv, failures) = r?;
            batch.vectors.push(fv);
            batch.failures.extend(failures);
        }
        Ok(batch)
    }
}

/// Decisions from a trained model over featurized pairs.
#[derive(Debug)]
pub struct ModelMatcher<'a> {
    pub featurizer: &'a PairFeaturizer,
    pub model: &'a MatchModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchOutcome {
    pub probabilities: Vec<f64>,
    pub decisions: Vec<u8>,
    pub batch: FeatureBatch,
}

impl ModelMatcher<'_> {
    /// Missing slots are filled with the model's training medians.
    pub fn decide_pairs(&self, pairs: &[(String, String)]) -> Result<MatchOutcome, PipelineError> {
        let batch = self.featurizer.featurize_batch(pairs)?;
        let probabilities: Vec<f64> = batch.vectors.iter().map(|fv| self.model.predict(fv)).collect();
        let decisions = probabilities
            .iter()
            .map(|&p| u8::from(p >= self.model.threshold()))
            .collect();
        Ok(MatchOutcome {
            probabilities,
            decisions,
            batch,
        })
    }

    /// Decision matrix covering every comparison needed up to cutoff `k`.
    /// Each distinct ordered text pair is featurized once.
    pub fn decision_matrix(
        &self,
        ds: &EvaluationDataset,
        k: usize,
        symmetrize: Symmetrize,
    ) -> Result<(DecisionMatrix, MatchOutcome), PipelineError> {
        let mut records = required_comparisons(ds, k, symmetrize);
        let (pairs, slot) = unique_pairs(records.iter().map(|r| (r.a.as_str(), r.b.as_str())));
        let outcome = self.decide_pairs(&pairs)?;
        for (r, s) in records.iter_mut().zip(slot) {
            r.decision = outcome.decisions[s];
        }
        Ok((DecisionMatrix::from_records(records)?, outcome))
    }
}

/// Distinct pairs in first-seen order, plus each input's index into them.
pub fn unique_pairs<'s>(
    pairs: impl Iterator<Item = (&'s str, &'s str)>,
) -> (Vec<(String, String)>, Vec<usize>) {
    let mut seen: HashMap<(&str, &str), usize> = HashMap::new();
    let mut unique = Vec::new();
    let mut slot = Vec::new();
    for (a, b) in pairs {
        let next = unique.len();
        let s = *seen.entry((a, b)).or_insert_with(|| {
            unique.push((a.to_owned(), b.to_owned()));
            next
        });
        slot.push(s);
    }
    (unique, slot)
}
