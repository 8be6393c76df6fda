//! Run configuration: a TOML file, overridden by global flags.
//!
//! Relative paths resolve against the config file's directory. The output
//! directory is not part of the config, so moving a run does not change its
//! config hash.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use rpad_core::agreement::{CategoryModel, MetricConfig, ShortBagPolicy};
use rpad_core::lingfeat::{BackendConfig, HashingEmbedder};
use rpad_core::matchmodel::TrainConfig;
use rpad_core::transport::EndpointConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Annotation JSONL, raw or already normalized.
    pub dataset: Option<PathBuf>,
    /// Normalization rules JSON; built-in defaults when absent.
    pub rules: Option<PathBuf>,
    pub train_pairs: Option<PathBuf>,
    pub test_pairs: Option<PathBuf>,
    /// Defaults to `model.json` in the output directory.
    pub model: Option<PathBuf>,
    /// Oracle decision cache; in-memory when absent.
    pub cache: Option<PathBuf>,
    pub icd_catalog: Option<PathBuf>,
    /// Scripted answers used with `--stub-oracles`.
    pub stub_script: Option<PathBuf>,
    /// Defaults to `decisions.jsonl` in the output directory.
    pub decisions: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    /// Trained model over pair features.
    #[default]
    Model,
    /// String equality on normalized text.
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EmbeddingConfig {
    Hash(HashingEmbedder),
    Http {
        endpoint: EndpointConfig,
        dimension: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    /// Up to five direct-match endpoints.
    pub direct: Vec<EndpointConfig>,
    /// Up to two ICD selector endpoints; they share the first embedding
    /// provider for retrieval.
    pub rag_selectors: Vec<EndpointConfig>,
    /// Up to three providers for the cosine slots; three offline hashing
    /// embedders when empty.
    pub embeddings: Vec<EmbeddingConfig>,
    pub top_k: Option<usize>,
    /// Worker threads for featurization; 0 means one per core.
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub k_max: usize,
    pub hardness: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            k_max: 3,
            hardness: vec![0.0, 0.5, 1.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainConfig {
    /// Labeled pairs the importances are measured on.
    pub split: Split,
    pub repeats: usize,
    pub correlation_threshold: f64,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        Self {
            split: Split::Test,
            repeats: 5,
            correlation_threshold: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds training and importance shuffles; replaces `train.seed`.
    pub seed: u64,
    /// Row label in the summary table; the algorithm rater id when absent.
    pub model_name: Option<String>,
    pub match_mode: MatchMode,
    pub kappa_categories: CategoryModel,
    pub paths: Paths,
    pub metric: MetricConfig,
    pub sweep: SweepConfig,
    pub train: TrainConfig,
    pub explain: ExplainConfig,
    pub language: BackendConfig,
    pub oracles: OracleConfig,
}

/// Flags that override the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub stub_oracles: bool,
    pub strict: bool,
}

/// A loaded config plus the directory its relative paths resolve against.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: RunConfig,
    pub base: PathBuf,
    pub stub_oracles: bool,
    pub strict: bool,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        let cfg: RunConfig = toml::from_str(text).context("malformed config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.sweep.k_max == 0 {
            bail!("sweep.k_max must be at least 1");
        }
        if self.metric.k > self.sweep.k_max {
            bail!("metric.k = {} exceeds sweep.k_max = {}", self.metric.k, self.sweep.k_max);
        }
        if let Some(h) = self.sweep.hardness.iter().find(|h| !(0.0..=1.0).contains(*h)) {
            bail!("sweep hardness {h} outside [0, 1]");
        }
        if self.oracles.direct.len() > 5 || self.oracles.rag_selectors.len() > 2 || self.oracles.embeddings.len() > 3 {
            bail!("at most 5 direct, 2 rag and 3 embedding oracles fit the feature schema");
        }
        if self.oracles.top_k == Some(0) {
            bail!("oracles.top_k must be positive");
        }
        Ok(())
    }
}

impl Resolved {
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> anyhow::Result<Self> {
        let (mut config, base) = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                let base = p.parent().map(Path::to_path_buf).unwrap_or_default();
                (RunConfig::from_toml(&text)?, base)
            }
            None => (RunConfig::default(), PathBuf::from(".")),
        };
        if let Some(seed) = overrides.seed {
            config.seed = seed;
        }
        config.train.seed = config.seed;
        if overrides.strict {
            config.metric.short_bag_policy = ShortBagPolicy::Strict;
        }
        Ok(Self {
            config,
            base,
            stub_oracles: overrides.stub_oracles,
            strict: overrides.strict,
        })
    }

    pub fn path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn require(&self, p: &Option<PathBuf>, what: &str) -> anyhow::Result<PathBuf> {
        match p {
            Some(p) => Ok(self.path(p)),
            None => bail!("config has no paths.{what}"),
        }
    }

    pub fn optional(&self, p: &Option<PathBuf>) -> Option<PathBuf> {
        p.as_deref().map(|p| self.path(p))
    }

    /// Canonical JSON of everything that influences outputs.
    pub fn canonical_json(&self) -> String {
        let v = serde_json::json!({
            "config": self.config,
            "stub_oracles": self.stub_oracles,
            "strict": self.strict,
        });
        serde_json::to_string_pretty(&v).expect("config serializes") + "\n"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_default() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml("sede = 3").is_err());
        assert!(RunConfig::from_toml("[metric]\nkk = 3").is_err());
    }

    #[test]
    fn sections_parse() {
        let cfg = RunConfig::from_toml(
            r#"
seed = 7
match_mode = "exact"
[metric]
k = 2
hardness = 0.5
short_bag_policy = "penalize"
symmetrize = "or"
[sweep]
k_max = 3
hardness = [1.0]
[train]
bags = 5
[[oracles.embeddings]]
kind = "hash"
name = "h"
dimension = 64
seed = 1
min_ngram = 3
max_ngram = 4
"#,
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.match_mode, MatchMode::Exact);
        assert_eq!(cfg.metric.k, 2);
        assert_eq!(cfg.train.bags, 5);
        assert_eq!(cfg.oracles.embeddings.len(), 1);
    }

    #[test]
    fn k_beyond_sweep_rejected() {
        assert!(RunConfig::from_toml("[metric]\nk = 4").is_err());
    }

    #[test]
    fn seed_flag_wins() {
        let r = Resolved::load(
            None,
            &Overrides {
                seed: Some(11),
                ..Overrides::default()
            },
        )
        .unwrap();
        assert_eq!((r.config.seed, r.config.train.seed), (11, 11));
    }
}
