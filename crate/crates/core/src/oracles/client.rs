//! Text-generation clients: an OpenAI-compatible HTTP client pinned to
//! temperature 0, and scripted stubs for offline runs and tests.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::transport::{EndpointConfig, HttpEndpoint, TransportError};

pub trait GenerationClient: Send + Sync {
    fn model_id(&self) -> &str;
    fn generate(&self, prompt: &str) -> Result<String, TransportError>;
    /// Extra attempts allowed when a response cannot be parsed.
    fn max_retries(&self) -> usize {
        2
    }
    /// Number of `generate` calls issued so far.
    fn calls(&self) -> usize;
}

#[derive(Debug)]
pub struct HttpGenerationClient {
    endpoint: HttpEndpoint,
    calls: AtomicUsize,
}

impl HttpGenerationClient {
    pub fn new(config: EndpointConfig) -> Self {
        Self {
            endpoint: HttpEndpoint::new(config),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn requests_sent(&self) -> usize {
        self.endpoint.requests_sent()
    }
}

impl GenerationClient for HttpGenerationClient {
    fn model_id(&self) -> &str {
        &self.endpoint.config().id
    }

    fn generate(&self, prompt: &str) -> Result<String, TransportError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let body = serde_json::json!({
            "model": self.endpoint.config().model(),
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0,
        });
        let resp = self.endpoint.post_json(&body)?;
        resp.pointer("/choices/0/message/content")
            .or_else(|| resp.pointer("/choices/0/text"))
            .and_then(|v| v.as_str())
            .map(str::to_owned)
            .ok_or_else(|| TransportError {
                attempts: 1,
                message: "response has no choices[0].message.content".into(),
            })
    }

    fn max_retries(&self) -> usize {
        self.endpoint.config().max_retries
    }

    fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

type Responder = Box<dyn Fn(&str, usize) -> Result<String, TransportError> + Send + Sync>;

/// Offline client answering from a script.
pub struct ScriptedClient {
    model_id: String,
    responder: Responder,
    calls: AtomicUsize,
    prompts: Mutex<Vec<String>>,
}

impl std::fmt::Debug for ScriptedClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScriptedClient")
            .field("model_id", &self.model_id)
            .field("calls", &self.calls)
            .finish()
    }
}

impl ScriptedClient {
    /// `f(prompt, call_index)` produces each response.
    pub fn from_fn(
        model_id: impl Into<String>,
        f: impl Fn(&str, usize) -> Result<String, TransportError> + Send + Sync + 'static,
    ) -> Self {
        Self {
            model_id: model_id.into(),
            responder: Box::new(f),
            calls: AtomicUsize::new(0),
            prompts: Mutex::new(Vec::new()),
        }
    }

    pub fn constant(model_id: impl Into<String>, response: impl Into<String>) -> Self {
        let response = response.into();
        Self::from_fn(model_id, move |_, _| Ok(response.clone()))
    }

    /// Responses in order; the last one repeats.
    pub fn sequence(model_id: impl Into<String>, responses: Vec<String>) -> Self {
        assert!(!responses.is_empty());
        Self::from_fn(model_id, move |_, i| {
            Ok(responses[i.min(responses.len() - 1)].clone())
        })
    }

    /// Answers from a [`StubScript`] by reading the diagnoses back out of
    /// the rendered prompt.
    pub fn from_script(model_id: impl Into<String>, script: &StubScript) -> Self {
        let direct: HashMap<(String, String), String> = script
            .direct
            .iter()
            .map(|r| ((canon(&r.a), canon(&r.b)), r.answer.clone()))
            .collect();
        let icd: HashMap<String, String> = script
            .icd
            .iter()
            .map(|r| (canon(&r.diagnosis), r.answer.clone()))
            .collect();
        let direct_default = script.direct_default.clone();
        let icd_default = script.icd_default.clone();
        Self::from_fn(model_id, move |prompt, _| {
            if let Some(candidate) = line_value(prompt, "Reference diagnosis:") {
                return Ok(icd
                    .get(&canon(candidate))
                    .cloned()
                    .unwrap_or_else(|| icd_default.clone()));
            }
            let a = line_value(prompt, "Diagnosis 1:").map(canon).unwrap_or_default();
            let b = line_value(prompt, "Diagnosis 2:").map(canon).unwrap_or_default();
            Ok(direct
                .get(&(a.clone(), b.clone()))
                .or_else(|| direct.get(&(b, a)))
                .cloned()
                .unwrap_or_else(|| direct_default.clone()))
        })
    }

    /// Prompts received so far, in call order.
    pub fn prompts(&self) -> Vec<String> {
        self.prompts.lock().expect("prompt log").clone()
    }
}

impl GenerationClient for ScriptedClient {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn generate(&self, prompt: &str) -> Result<String, TransportError> {
        let i = self.calls.fetch_add(1, Ordering::SeqCst);
        self.prompts.lock().expect("prompt log").push(prompt.to_owned());
        (self.responder)(prompt, i)
    }

    fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

fn canon(s: &str) -> String {
    s.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

fn line_value<'a>(prompt: &'a str, prefix: &str) -> Option<&'a str> {
    prompt
        .lines()
        .find_map(|l| l.strip_prefix(prefix))
        .map(str::trim)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedPair {
    pub a: String,
    pub b: String,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedSelection {
    pub diagnosis: String,
    pub answer: String,
}

/// Scripted oracle answers, loaded from JSON for `--stub-oracles` runs.
///
/// Direct-match lookups ignore pair order; unknown pairs get
/// `direct_default`, unknown ICD references get `icd_default`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StubScript {
    #[serde(default)]
    pub direct: Vec<ScriptedPair>,
    #[serde(default = "default_no")]
    pub direct_default: String,
    #[serde(default)]
    pub icd: Vec<ScriptedSelection>,
    #[serde(default = "default_first")]
    pub icd_default: String,
}

fn default_no() -> String {
    "No".into()
}

fn default_first() -> String {
    "1".into()
}

impl Default for StubScript {
    fn default() -> Self {
        Self {
            direct: Vec::new(),
            direct_default: default_no(),
            icd: Vec::new(),
            icd_default: default_first(),
        }
    }
}
