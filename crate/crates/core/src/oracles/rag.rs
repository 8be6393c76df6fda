use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cache::DecisionCache;
use super::client::GenerationClient;
use super::prompts::{numbered_list, PromptTemplate};
use super::OracleError;
use crate::corpus::IcdEntry;
use crate::lingfeat::EmbeddingProvider;
use crate::normalizer::{normalize, NormalizationRules};

pub const DEFAULT_TOP_K: usize = 15;

/// Immutable exact nearest-neighbour index over an ICD catalog.
pub struct RagIndex {
    entries: Vec<IcdEntry>,
    vectors: Vec<f64>,
    dimension: usize,
    provider: Arc<dyn EmbeddingProvider>,
    titles: HashMap<String, usize>,
}

impl std::fmt::Debug for RagIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RagIndex")
            .field("entries", &self.entries.len())
            .field("dimension", &self.dimension)
            .field("provider", &self.provider.name())
            .finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

/// Embeds every catalog entry that lacks a vector, using its normalized
/// title. Precomputed vectors must match the provider's dimension.
pub fn build_rag_index(
    catalog: Vec<IcdEntry>,
    provider: Arc<dyn EmbeddingProvider>,
    rules: &NormalizationRules,
) -> Result<RagIndex, OracleError> {
    if catalog.is_empty() {
        return Err(OracleError::EmptyCatalog);
    }
    let dimension = provider.dimension();
    let normalized: Vec<Option<String>> = catalog
        .iter()
        .map(|e| normalize(&e.title, rules).ok())
        .collect();
    let embedded: Vec<Result<Vec<f64>, OracleError>> = catalog
        .par_iter()
        .zip(normalized.par_iter())
        .map(|(entry, norm)| {
            let v = match &entry.embedding {
                Some(v) => v.clone(),
                None => provider
                    .embed(norm.as_deref().unwrap_or(&entry.title))
                    .map_err(|e| OracleError::ProviderFailure {
                        code: entry.code.clone(),
                        reason: e.to_string(),
                    })?,
            };
            if v.len() != dimension {
                return Err(OracleError::ProviderFailure {
                    code: entry.code.clone(),
                    reason: format!("embedding has {} dimensions, expected {dimension}", v.len()),
                });
            }
            Ok(v)
        })
        .collect();

    let mut vectors = Vec::with_capacity(catalog.len() * dimension);
    let mut entries = catalog;
    for (entry, v) in entries.iter_mut().zip(embedded) {
        let v = v?;
        vectors.extend_from_slice(&v);
        entry.embedding = Some(v);
    }
    let mut titles = HashMap::new();
    for (i, norm) in normalized.into_iter().enumerate() {
        if let Some(t) = norm {
            titles.entry(t).or_insert(i);
        }
    }
    Ok(RagIndex {
        entries,
        vectors,
        dimension,
        provider,
        titles,
    })
}

impl RagIndex {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[IcdEntry] {
        &self.entries
    }

    pub fn entry(&self, index: usize) -> &IcdEntry {
        &self.entries[index]
    }

    pub fn provider(&self) -> &Arc<dyn EmbeddingProvider> {
        &self.provider
    }

    /// Catalog position of the first entry whose normalized title equals
    /// `normalized`.
    pub fn title_match(&self, normalized: &str) -> Option<usize> {
        self.titles.get(normalized).copied()
    }

    /// The `k` nearest entries by Euclidean distance, nearest first; equal
    /// distances keep catalog order.
    pub fn nearest(&self, query: &[f64], k: usize) -> Result<Vec<Neighbor>, OracleError> {
        if query.len() != self.dimension {
            return Err(OracleError::ProviderFailure {
                code: String::new(),
                reason: format!("query has {} dimensions, expected {}", query.len(), self.dimension),
            });
        }
        let mut scored: Vec<(f64, usize)> = self
            .vectors
            .chunks_exact(self.dimension)
            .enumerate()
            .map(|(i, v)| {
                let d2: f64 = v.iter().zip(query).map(|(x, y)| (x - y) * (x - y)).sum();
                (d2, i)
            })
            .collect();
        let k = k.min(scored.len());
        if k == 0 {
            return Ok(Vec::new());
        }
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, cmp);
            scored.truncate(k);
        }
        scored.sort_by(cmp);
        Ok(scored
            .into_iter()
            .map(|(d2, index)| Neighbor {
                index,
                distance: d2.sqrt(),
            })
            .collect())
    }

    pub fn nearest_to_text(&self, text: &str, k: usize) -> Result<Vec<Neighbor>, OracleError> {
        let q = self
            .provider
            .embed(text)
            .map_err(|e| OracleError::ProviderFailure {
                code: String::new(),
                reason: e.to_string(),
            })?;
        self.nearest(&q, k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AssignmentRoute {
    /// Normalized diagnosis equals a catalog title; no generation call.
    DirectMatch,
    /// The client picked this 1-based rank from the candidate list.
    Selected { rank: usize },
    /// Selection failed twice; nearest neighbour used.
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcdAssignment {
    pub entry_index: usize,
    pub code: String,
    pub route: AssignmentRoute,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// First run of ASCII digits in the response.
pub fn parse_selection(response: &str) -> Option<usize> {
    let start = response.find(|c: char| c.is_ascii_digit())?;
    let digits: String = response[start..]
        .chars()
        .take_while(char::is_ascii_digit)
        .collect();
    digits.parse().ok()
}

/// Retrieval plus selection: assigns an ICD entry to a normalized diagnosis.
#[derive(Clone)]
pub struct IcdSelector {
    index: Arc<RagIndex>,
    client: Arc<dyn GenerationClient>,
    template: PromptTemplate,
    top_k: usize,
    id: String,
}

impl std::fmt::Debug for IcdSelector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("IcdSelector")
            .field("id", &self.id)
            .field("top_k", &self.top_k)
            .finish()
    }
}

impl IcdSelector {
    pub fn new(index: Arc<RagIndex>, client: Arc<dyn GenerationClient>) -> Self {
        let id = format!("icd:{}:{}", client.model_id(), index.provider().name());
        Self {
            index,
            client,
            template: PromptTemplate::icd_select(),
            top_k: DEFAULT_TOP_K,
            id,
        }
    }

    pub fn with_template(mut self, template: PromptTemplate) -> Self {
        self.template = template;
        self
    }

    pub fn with_top_k(mut self, top_k: usize) -> Self {
        assert!(top_k > 0, "top_k must be positive");
        self.top_k = top_k;
        self
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn index(&self) -> &RagIndex {
        &self.index
    }

    pub fn client(&self) -> &Arc<dyn GenerationClient> {
        &self.client
    }

    pub fn assign(&self, diagnosis: &str, cache: &DecisionCache) -> Result<IcdAssignment, OracleError> {
        if let Some(i) = self.index.title_match(diagnosis) {
            return Ok(self.assignment(i, AssignmentRoute::DirectMatch, Vec::new()));
        }
        let neighbors = self.index.nearest_to_text(diagnosis, self.top_k)?;
        let titles: Vec<&str> = neighbors
            .iter()
            .map(|n| self.index.entry(n.index).title.as_str())
            .collect();
        let prompt = self.template.render(&[
            ("candidate", diagnosis),
            ("diagnoses", &numbered_list(&titles)),
        ]);
        let valid = |r: usize| (1..=neighbors.len()).contains(&r);

        let (rank, response) = match cache.lookup(&self.id, &prompt) {
            Some(hit) => (hit.decision.as_u64().map(|r| r as usize), hit.response),
            None => {
                let mut picked = None;
                let mut last = String::new();
                for _ in 0..2 {
                    last = self.client.generate(&prompt)?;
                    picked = parse_selection(&last).filter(|r| valid(*r));
                    if picked.is_some() {
                        break;
                    }
                }
                let decision = picked.map_or(serde_json::Value::Null, |r| serde_json::json!(r));
                cache.record(&self.id, &prompt, &last, decision)?;
                (picked, last)
            }
        };
        Ok(match rank.filter(|r| valid(*r)) {
            Some(r) => self.assignment(neighbors[r - 1].index, AssignmentRoute::Selected { rank: r }, Vec::new()),
            None => {
                let warning = format!(
                    "{}: selection {:?} not in 1..={}; using nearest neighbour",
                    self.id,
                    response.trim(),
                    neighbors.len()
                );
                self.assignment(neighbors[0].index, AssignmentRoute::Fallback, vec![warning])
            }
        })
    }

    fn assignment(&self, i: usize, route: AssignmentRoute, warnings: Vec<String>) -> IcdAssignment {
        IcdAssignment {
            entry_index: i,
            code: self.index.entry(i).code.clone(),
            route,
            warnings,
        }
    }
}

/// 1 iff both codes share their first three characters.
pub fn icd_pair_feature(code_a: &str, code_b: &str) -> Result<u8, OracleError> {
    let head = |c: &str| -> Result<Vec<char>, OracleError> {
        let h: Vec<char> = c.chars().take(3).collect();
        if h.len() < 3 {
            return Err(OracleError::CodeTooShort(c.to_owned()));
        }
        Ok(h)
    };
    Ok(u8::from(head(code_a)? == head(code_b)?))
}

/// Pair decision from one (selector model, embedding provider) configuration.
#[derive(Debug, Clone)]
pub struct IcdRagOracle {
    selector: IcdSelector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcdPairDecision {
    pub decision: u8,
    pub a: IcdAssignment,
    pub b: IcdAssignment,
}

impl IcdRagOracle {
    pub fn new(selector: IcdSelector) -> Self {
        Self { selector }
    }

    pub fn id(&self) -> &str {
        self.selector.id()
    }

    pub fn selector(&self) -> &IcdSelector {
        &self.selector
    }

    pub fn query(&self, a: &str, b: &str, cache: &DecisionCache) -> Result<IcdPairDecision, OracleError> {
        let a = self.selector.assign(a, cache)?;
        let b = self.selector.assign(b, cache)?;
        Ok(IcdPairDecision {
            decision: icd_pair_feature(&a.code, &b.code)?,
            a,
            b,
        })
    }
}
