//! Builds rules, datasets and the pair featurizer from a resolved config.

use std::sync::Arc;

use anyhow::{bail, Context};
use rpad_core::corpus::{load_evaluation_dataset, load_icd_catalog, EvaluationDataset};
use rpad_core::lingfeat::{EmbeddingProvider, HashingEmbedder, HttpEmbeddingProvider, RuleBackend};
use rpad_core::normalizer::{normalize_dataset, NormalizationIssue, NormalizationRules};
use rpad_core::oracles::{
    build_rag_index, DecisionCache, DirectMatchOracle, GenerationClient, HttpGenerationClient,
    IcdRagOracle, IcdSelector, ScriptedClient, StubScript,
};
use rpad_core::pipeline::PairFeaturizer;

use crate::config::{EmbeddingConfig, Resolved};

pub const STUB_DIRECT: usize = 5;
pub const STUB_RAG: usize = 2;

pub fn rules(r: &Resolved) -> anyhow::Result<NormalizationRules> {
    match r.optional(&r.config.paths.rules) {
        Some(p) => NormalizationRules::load(&p).with_context(|| format!("rules {}", p.display())),
        None => Ok(NormalizationRules::default()),
    }
}

fn is_normalized(ds: &EvaluationDataset) -> bool {
    (0..ds.raters().len()).all(|r| {
        (0..ds.n_cases()).all(|c| ds.bag(r, c).items().iter().all(|d| d.normalized().is_some()))
    })
}

/// Loads the panel, normalizing it unless every diagnosis already carries
/// a normalized form.
pub fn dataset(r: &Resolved) -> anyhow::Result<(EvaluationDataset, Vec<NormalizationIssue>)> {
    let path = r.require(&r.config.paths.dataset, "dataset")?;
    let ds = load_evaluation_dataset(&path, r.config.sweep.k_max)
        .with_context(|| format!("dataset {}", path.display()))?;
    if is_normalized(&ds) {
        return Ok((ds, Vec::new()));
    }
    Ok(normalize_dataset(&ds, &rules(r)?)?)
}

pub fn cache(r: &Resolved) -> anyhow::Result<Arc<DecisionCache>> {
    Ok(Arc::new(match r.optional(&r.config.paths.cache) {
        Some(p) => DecisionCache::open(&p).with_context(|| format!("cache {}", p.display()))?,
        None => DecisionCache::in_memory(),
    }))
}

fn providers(r: &Resolved) -> Vec<Arc<dyn EmbeddingProvider>> {
    if r.config.oracles.embeddings.is_empty() {
        return HashingEmbedder::default_trio()
            .into_iter()
            .map(|p| Arc::new(p) as Arc<dyn EmbeddingProvider>)
            .collect();
    }
    r.config
        .oracles
        .embeddings
        .iter()
        .map(|e| match e {
            EmbeddingConfig::Hash(h) => Arc::new(h.clone()) as Arc<dyn EmbeddingProvider>,
            EmbeddingConfig::Http { endpoint, dimension } => {
                Arc::new(HttpEmbeddingProvider::new(endpoint.clone(), *dimension)) as Arc<dyn EmbeddingProvider>
            }
        })
        .collect()
}

fn stub_script(r: &Resolved) -> anyhow::Result<StubScript> {
    match r.optional(&r.config.paths.stub_script) {
        Some(p) => {
            let text = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("stub script {}", p.display()))
        }
        None => Ok(StubScript::default()),
    }
}

/// With `--stub-oracles`, five direct and (given a catalog) two selector
/// slots are served by scripted clients; otherwise the configured endpoints
/// are used.
pub fn featurizer(r: &Resolved) -> anyhow::Result<PairFeaturizer> {
    let rules = rules(r)?;
    let backend = Arc::new(RuleBackend::new(&r.config.language)?);
    let providers = providers(r);
    let catalog = match r.optional(&r.config.paths.icd_catalog) {
        Some(p) => Some(load_icd_catalog(&p).with_context(|| format!("ICD catalog {}", p.display()))?),
        None => None,
    };

    type Clients = Vec<Arc<dyn GenerationClient>>;
    let (direct_clients, selector_clients): (Clients, Clients) =
        if r.stub_oracles {
            let script = stub_script(r)?;
            let make = |name: String| Arc::new(ScriptedClient::from_script(name, &script)) as Arc<dyn GenerationClient>;
            let selectors = if catalog.is_some() {
                (1..=STUB_RAG).map(|i| make(format!("stub-select-{i}"))).collect()
            } else {
                Vec::new()
            };
            ((1..=STUB_DIRECT).map(|i| make(format!("stub-direct-{i}"))).collect(), selectors)
        } else {
            let http = |e: &rpad_core::transport::EndpointConfig| {
                Arc::new(HttpGenerationClient::new(e.clone())) as Arc<dyn GenerationClient>
            };
            (
                r.config.oracles.direct.iter().map(http).collect(),
                r.config.oracles.rag_selectors.iter().map(http).collect(),
            )
        };

    let direct = direct_clients.into_iter().map(DirectMatchOracle::new).collect();
    let mut rag = Vec::new();
    if !selector_clients.is_empty() {
        let Some(catalog) = catalog else {
            bail!("ICD selectors are configured but paths.icd_catalog is not set");
        };
        let index = Arc::new(build_rag_index(catalog, providers[0].clone(), &rules)?);
        for client in selector_clients {
            let mut sel = IcdSelector::new(index.clone(), client);
            if let Some(k) = r.config.oracles.top_k {
                sel = sel.with_top_k(k);
            }
            rag.push(IcdRagOracle::new(sel));
        }
    }
    Ok(PairFeaturizer::new(rules, backend)
        .with_providers(providers)
        .with_direct(direct)?
        .with_rag(rag)?
        .with_cache(cache(r)?)
        .with_threads(r.config.oracles.threads))
}
