//! Blocking JSON-over-HTTP transport with bounded retries.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("transport failed after {attempts} attempt(s): {message}")]
pub struct TransportError {
    pub attempts: usize,
    pub message: String,
}

/// Entry of the client config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub id: String,
    pub url: String,
    /// Environment variable holding a bearer token.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
    #[serde(default = "default_retries")]
    pub max_retries: usize,
    /// Model name sent in the request body; defaults to `id`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
}

fn default_timeout() -> f64 {
    60.0
}

fn default_retries() -> usize {
    3
}

fn default_backoff() -> u64 {
    250
}

impl EndpointConfig {
    pub fn new(id: impl Into<String>, url: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            url: url.into(),
            auth_env: None,
            timeout_s: default_timeout(),
            max_retries: default_retries(),
            model: None,
            backoff_ms: default_backoff(),
        }
    }

    pub fn model(&self) -> &str {
        self.model.as_deref().unwrap_or(&self.id)
    }
}

pub struct HttpEndpoint {
    config: EndpointConfig,
    agent: ureq::Agent,
    requests: AtomicUsize,
}

impl std::fmt::Debug for HttpEndpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpEndpoint")
            .field("config", &self.config)
            .field("requests", &self.requests)
            .finish()
    }
}

impl HttpEndpoint {
    pub fn new(config: EndpointConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_s.max(0.001))))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            config,
            agent,
            requests: AtomicUsize::new(0),
        }
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    /// Requests actually put on the wire, retries included.
    pub fn requests_sent(&self) -> usize {
        self.requests.load(Ordering::Relaxed)
    }

    /// POSTs `body`, retrying transport failures, 429 and 5xx up to
    /// `max_retries` extra times.
    pub fn post_json(&self, body: &serde_json::Value) -> Result<serde_json::Value, TransportError> {
        let token = self
            .config
            .auth_env
            .as_ref()
            .and_then(|var| std::env::var(var).ok());
        let attempts = self.config.max_retries + 1;
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 && self.config.backoff_ms > 0 {
                let wait = self.config.backoff_ms.saturating_mul(1 << (attempt - 1).min(6));
                std::thread::sleep(Duration::from_millis(wait));
            }
            self.requests.fetch_add(1, Ordering::Relaxed);
            let mut req = self.agent.post(&self.config.url);
            if let Some(tok) = &token {
                req = req.header("Authorization", &format!("Bearer {tok}"));
            }
            match req.send_json(body) {
                Ok(mut resp) => {
                    let status = resp.status().as_u16();
                    if status == 429 || status >= 500 {
                        last = format!("HTTP {status}");
                        continue;
                    }
                    if status >= 400 {
                        return Err(TransportError {
                            attempts: attempt + 1,
                            message: format!("HTTP {status}"),
                        });
                    }
                    match resp.body_mut().read_json::<serde_json::Value>() {
                        Ok(v) => return Ok(v),
                        Err(e) => last = format!("bad response body: {e}"),
                    }
                }
                Err(e) => last = e.to_string(),
            }
        }
        Err(TransportError {
            attempts,
            message: last,
        })
    }
}
