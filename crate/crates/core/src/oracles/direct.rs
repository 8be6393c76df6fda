use std::sync::Arc;

use super::cache::DecisionCache;
use super::client::GenerationClient;
use super::prompts::PromptTemplate;
use super::OracleError;

/// Reads a yes/no answer. The first word decides; otherwise the answer is
/// accepted only when exactly one polarity appears anywhere in it.
pub fn parse_yes_no(response: &str) -> Option<u8> {
    let words: Vec<String> = response
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect();
    let polarity = |w: &str| match w {
        "yes" | "да" => Some(1u8),
        "no" | "нет" => Some(0u8),
        _ => None,
    };
    if let Some(v) = words.first().and_then(|w| polarity(w)) {
        return Some(v);
    }
    let mut seen = words.iter().filter_map(|w| polarity(w));
    let first = seen.next()?;
    if seen.all(|v| v == first) {
        Some(first)
    } else {
        None
    }
}

/// Direct pair-match oracle over one generation model.
#[derive(Clone)]
pub struct DirectMatchOracle {
    client: Arc<dyn GenerationClient>,
    template: PromptTemplate,
    id: String,
}

impl std::fmt::Debug for DirectMatchOracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DirectMatchOracle").field("id", &self.id).finish()
    }
}

impl DirectMatchOracle {
    pub fn new(client: Arc<dyn GenerationClient>) -> Self {
        Self::with_template(client, PromptTemplate::direct_match())
    }

    pub fn with_template(client: Arc<dyn GenerationClient>, template: PromptTemplate) -> Self {
        let id = format!("direct:{}", client.model_id());
        Self {
            client,
            template,
            id,
        }
    }

    /// Cache namespace for this oracle.
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn client(&self) -> &Arc<dyn GenerationClient> {
        &self.client
    }

    pub fn render(&self, a: &str, b: &str) -> String {
        self.template.render(&[("diag", a), ("other_diag", b)])
    }

    /// Decision for `(a, b)` with `a` rendered first. A cached entry is
    /// replayed without calling the client, including a cached failure to
    /// parse. Transport failures are not cached.
    pub fn query(&self, a: &str, b: &str, cache: &DecisionCache) -> Result<u8, OracleError> {
        let prompt = self.render(a, b);
        if let Some(hit) = cache.lookup(&self.id, &prompt) {
            return match hit.decision.as_u64() {
                Some(v @ (0 | 1)) => Ok(v as u8),
                _ => Err(OracleError::UnparseableResponse {
                    oracle: self.id.clone(),
                    response: hit.response,
                }),
            };
        }
        let attempts = 1 + self.client.max_retries();
        let mut last = String::new();
        for _ in 0..attempts {
            last = self.client.generate(&prompt)?;
            if let Some(v) = parse_yes_no(&last) {
                cache.record(&self.id, &prompt, &last, serde_json::json!(v))?;
                return Ok(v);
            }
        }
        cache.record(&self.id, &prompt, &last, serde_json::Value::Null)?;
        Err(OracleError::UnparseableResponse {
            oracle: self.id.clone(),
            response: last,
        })
    }
}

/// One-shot form of [`DirectMatchOracle::query`].
pub fn direct_match_query(
    client: Arc<dyn GenerationClient>,
    pair: (&str, &str),
    cache: &DecisionCache,
) -> Result<u8, OracleError> {
    DirectMatchOracle::new(client).query(pair.0, pair.1, cache)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::ScriptedClient;

    #[test]
    fn parser_contract() {
        assert_eq!(parse_yes_no("Yes"), Some(1));
        assert_eq!(parse_yes_no(" no.\n"), Some(0));
        assert_eq!(parse_yes_no("YES, they match"), Some(1));
        assert_eq!(parse_yes_no("Answer: No"), Some(0));
        assert_eq!(parse_yes_no("Да"), Some(1));
        assert_eq!(parse_yes_no("maybe"), None);
        assert_eq!(parse_yes_no("Answer: yes or no"), None);
        assert_eq!(parse_yes_no("nope"), None);
        assert_eq!(parse_yes_no(""), None);
    }

    #[test]
    fn scripted_answers() {
        let cache = DecisionCache::in_memory();
        let yes = Arc::new(ScriptedClient::constant("y", "Yes"));
        assert_eq!(direct_match_query(yes, ("a", "b"), &cache), Ok(1));
        let no = Arc::new(ScriptedClient::constant("n", " no.\n"));
        assert_eq!(direct_match_query(no, ("a", "b"), &cache), Ok(0));
    }

    #[test]
    fn retries_then_caches_failure() {
        let client = Arc::new(ScriptedClient::constant("m", "I cannot say"));
        let oracle = DirectMatchOracle::new(client.clone());
        let cache = DecisionCache::in_memory();
        assert!(matches!(
            oracle.query("a", "b", &cache),
            Err(OracleError::UnparseableResponse { .. })
        ));
        assert_eq!(client.calls(), 3);
        assert!(oracle.query("a", "b", &cache).is_err());
        assert_eq!(client.calls(), 3);
    }

    #[test]
    fn retry_recovers() {
        let client = Arc::new(ScriptedClient::sequence("m", vec!["hmm".into(), "No".into()]));
        let oracle = DirectMatchOracle::new(client.clone());
        let cache = DecisionCache::in_memory();
        assert_eq!(oracle.query("a", "b", &cache), Ok(0));
        assert_eq!(client.calls(), 2);
    }

    #[test]
    fn warm_cache_issues_no_calls() {
        let client = Arc::new(ScriptedClient::constant("m", "Yes"));
        let oracle = DirectMatchOracle::new(client.clone());
        let cache = DecisionCache::in_memory();
        oracle.query("x", "y", &cache).unwrap();
        for _ in 0..5 {
            assert_eq!(oracle.query("x", "y", &cache), Ok(1));
        }
        assert_eq!(client.calls(), 1);
        // order matters: (y, x) is a distinct prompt
        oracle.query("y", "x", &cache).unwrap();
        assert_eq!(client.calls(), 2);
    }

    #[test]
    fn transport_failure_not_cached() {
        let client = Arc::new(ScriptedClient::from_fn("m", |_, i| {
            if i == 0 {
                Err(crate::transport::TransportError {
                    attempts: 4,
                    message: "down".into(),
                })
            } else {
                Ok("Yes".into())
            }
        }));
        let oracle = DirectMatchOracle::new(client);
        let cache = DecisionCache::in_memory();
        assert!(matches!(oracle.query("a", "b", &cache), Err(OracleError::Transport(_))));
        assert!(cache.is_empty());
        assert_eq!(oracle.query("a", "b", &cache), Ok(1));
    }
}
