//! Embedding providers for the cosine-similarity feature group.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::transport::{EndpointConfig, HttpEndpoint, TransportError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProviderError {
    #[error("provider `{provider}` returned {got} dimensions, expected {expected}")]
    Dimension {
        provider: String,
        expected: usize,
        got: usize,
    },
    #[error("cannot embed empty text")]
    EmptyText,
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("unexpected response: {0}")]
    Response(String),
}

pub trait EmbeddingProvider: Send + Sync {
    fn name(&self) -> &str;
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>, ProviderError>;
}

/// FNV-1a, stable across platforms and releases.
pub(crate) fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Offline embedder: signed feature hashing of word tokens and character
/// n-grams, L2-normalized.
///
/// It is a lexical stand-in for a neural encoder; different seeds give
/// decorrelated providers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HashingEmbedder {
    pub name: String,
    pub dimension: usize,
    pub seed: u64,
    pub min_ngram: usize,
    pub max_ngram: usize,
}

impl HashingEmbedder {
    pub fn new(name: impl Into<String>, dimension: usize, seed: u64) -> Self {
        Self {
            name: name.into(),
            dimension: dimension.max(1),
            seed,
            min_ngram: 3,
            max_ngram: 4,
        }
    }

    /// Three decorrelated offline providers for the three cosine slots.
    pub fn default_trio() -> Vec<HashingEmbedder> {
        vec![
            Self::new("hash-256-a", 256, 1),
            Self::new("hash-256-b", 256, 2),
            Self {
                min_ngram: 2,
                max_ngram: 5,
                ..Self::new("hash-384-c", 384, 3)
            },
        ]
    }

    fn add(&self, v: &mut [f64], feature: &str, weight: f64) {
        let h = fnv1a(self.seed, feature.as_bytes());
        let idx = (h % self.dimension as u64) as usize;
        let sign = if (h >> 63) == 0 { 1.0 } else { -1.0 };
        v[idx] += sign * weight;
    }
}

impl EmbeddingProvider for HashingEmbedder {
    fn name(&self) -> &str {
        &self.name
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, ProviderError> {
        if text.trim().is_empty() {
            return Err(ProviderError::EmptyText);
        }
        let mut v = vec![0.0; self.dimension];
        for word in text.split_whitespace() {
            self.add(&mut v, &format!("w:{word}"), 1.0);
            let chars: Vec<char> = format!("<{word}>").chars().collect();
            for n in self.min_ngram..=self.max_ngram {
                for gram in chars.windows(n) {
                    let g: String = gram.iter().collect();
                    self.add(&mut v, &format!("c{n}:{g}"), 0.5);
                }
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        } else {
            // every feature cancelled out; fall back to a fixed direction
            v[(fnv1a(self.seed, text.as_bytes()) % self.dimension as u64) as usize] = 1.0;
        }
        Ok(v)
    }
}

/// OpenAI-compatible `/embeddings` endpoint.
#[derive(Debug)]
pub struct HttpEmbeddingProvider {
    endpoint: HttpEndpoint,
    dimension: usize,
}

impl HttpEmbeddingProvider {
    pub fn new(config: EndpointConfig, dimension: usize) -> Self {
        Self {
            endpoint: HttpEndpoint::new(config),
            dimension,
        }
    }

    pub fn requests_sent(&self) -> usize {
        self.endpoint.requests_sent()
    }
}

impl EmbeddingProvider for HttpEmbeddingProvider {
    fn name(&self) -> &str {
        &self.endpoint.config().id
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, ProviderError> {
        if text.trim().is_empty() {
            return Err(ProviderError::EmptyText);
        }
        let body = serde_json::json!({"model": self.endpoint.config().model(), "input": text});
        let resp = self.endpoint.post_json(&body)?;
        let arr = resp
            .pointer("/data/0/embedding")
            .and_then(|v| v.as_array())
            .ok_or_else(|| ProviderError::Response("missing data[0].embedding".into()))?;
        let v = arr
            .iter()
            .map(|x| x.as_f64().ok_or_else(|| ProviderError::Response("non-numeric embedding".into())))
            .collect::<Result<Vec<f64>, _>>()?;
        if v.len() != self.dimension {
            return Err(ProviderError::Dimension {
                provider: self.name().to_owned(),
                expected: self.dimension,
                got: v.len(),
            });
        }
        Ok(v)
    }
}
