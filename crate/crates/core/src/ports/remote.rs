//! Minimal JSON-over-HTTP client for real model backends.
//!
//! Endpoints (all `POST`, relative to `base_url`):
//!
//! | endpoint    | request                                              | response                          |
//! |-------------|------------------------------------------------------|-----------------------------------|
//! | `/embed`    | `{"texts": [..]}`                                    | `{"vectors": [[..], ..]}`         |
//! | `/caption`  | `{"captions": [..], "tags": [..]}`                   | `{"caption": ".."}`               |
//! | `/generate` | `{"bundle": {..}}`                                   | `{"text": ".."}`                  |
//! | `/judge`    | `{"question": "..", "reference": "..", "prediction": ".."}` | `{"verdict": "yes"\|"no", "score": 0-5}` |

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::memory::Chunk;
use crate::ports::{Captioner, Generator, Judge, Judgement, TextEncoder};
use crate::retrieval::PromptBundle;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteBackendConfig {
    pub base_url: String,
    /// Per-request timeout in seconds.
    pub timeout: f64,
    /// Extra attempts after the first one fails.
    pub retry_count: u32,
    /// Environment variable holding the bearer token, if any.
    pub api_key_env_var: Option<String>,
    /// First backoff delay in seconds; doubles per retry.
    pub backoff: f64,
}

impl Default for RemoteBackendConfig {
    fn default() -> Self {
        Self {
            base_url: "http://127.0.0.1:8080".into(),
            timeout: 30.0,
            retry_count: 2,
            api_key_env_var: None,
            backoff: 0.1,
        }
    }
}

impl RemoteBackendConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.timeout > 0.0) || !self.timeout.is_finite() {
            return Err(Error::invalid("remote timeout must be > 0"));
        }
        if !(self.backoff >= 0.0) {
            return Err(Error::invalid("remote backoff must be >= 0"));
        }
        if self.base_url.is_empty() {
            return Err(Error::invalid("remote base_url is empty"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Endpoint {
    Embed,
    Caption,
    Generate,
    Judge,
}

impl Endpoint {
    pub fn as_str(&self) -> &'static str {
        match self {
            Endpoint::Embed => "embed",
            Endpoint::Caption => "caption",
            Endpoint::Generate => "generate",
            Endpoint::Judge => "judge",
        }
    }
}

#[derive(Debug)]
pub struct RemoteClient {
    cfg: RemoteBackendConfig,
    agent: ureq::Agent,
}

impl RemoteClient {
    pub fn new(cfg: RemoteBackendConfig) -> Result<Self> {
        cfg.validate()?;
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs_f64(cfg.timeout))
            .build();
        Ok(Self { cfg, agent })
    }

    pub fn config(&self) -> &RemoteBackendConfig {
        &self.cfg
    }

    /// POST `payload` to `base_url/endpoint`, retrying failures with exponential backoff.
    pub fn call(&self, endpoint: Endpoint, payload: &Value) -> Result<Value> {
        let url = format!("{}/{}", self.cfg.base_url.trim_end_matches('/'), endpoint.as_str());
        let token = self
            .cfg
            .api_key_env_var
            .as_deref()
            .and_then(|var| std::env::var(var).ok());
        let attempts = self.cfg.retry_count + 1;
        let mut last_error = String::new();
        for attempt in 1..=attempts {
            let mut req = self.agent.post(&url);
            if let Some(token) = &token {
                req = req.set("Authorization", &format!("Bearer {token}"));
            }
            match req.send_json(payload) {
                Ok(resp) => {
                    return resp.into_json::<Value>().map_err(|e| Error::Protocol {
                        endpoint: endpoint.as_str().into(),
                        message: format!("response is not JSON: {e}"),
                    });
                }
                Err(ureq::Error::Status(code, resp)) => {
                    let body = resp.into_string().unwrap_or_default();
                    last_error = format!("HTTP {code}: {}", body.chars().take(200).collect::<String>());
                }
                Err(ureq::Error::Transport(t)) => last_error = t.to_string(),
            }
            if attempt < attempts {
                let delay = self.cfg.backoff * 2f64.powi(attempt as i32 - 1);
                std::thread::sleep(Duration::from_secs_f64(delay));
            }
        }
        Err(Error::backend(endpoint.as_str(), attempts, last_error))
    }
}

pub fn remote_call(cfg: &RemoteBackendConfig, endpoint: Endpoint, payload: &Value) -> Result<Value> {
    RemoteClient::new(cfg.clone())?.call(endpoint, payload)
}

fn field<'a>(endpoint: Endpoint, value: &'a Value, key: &str) -> Result<&'a Value> {
    value.get(key).ok_or_else(|| Error::Protocol {
        endpoint: endpoint.as_str().into(),
        message: format!("missing field `{key}`"),
    })
}

fn protocol(endpoint: Endpoint, message: impl Into<String>) -> Error {
    Error::Protocol {
        endpoint: endpoint.as_str().into(),
        message: message.into(),
    }
}

pub struct RemoteTextEncoder {
    client: Arc<RemoteClient>,
}

impl RemoteTextEncoder {
    pub fn new(client: Arc<RemoteClient>) -> Self {
        Self { client }
    }
}

impl TextEncoder for RemoteTextEncoder {
    fn encode(&self, text: &str) -> Result<Vec<f64>> {
        let ep = Endpoint::Embed;
        let resp = self.client.call(ep, &json!({ "texts": [text] }))?;
        let vectors: Vec<Vec<f64>> = serde_json::from_value(field(ep, &resp, "vectors")?.clone())
            .map_err(|e| protocol(ep, format!("bad `vectors`: {e}")))?;
        let vec = vectors
            .into_iter()
            .next()
            .ok_or_else(|| protocol(ep, "`vectors` is empty"))?;
        if vec.iter().any(|v| !v.is_finite()) {
            return Err(protocol(ep, "non-finite embedding value"));
        }
        Ok(vec)
    }

    fn deterministic(&self) -> bool {
        false
    }
}

pub struct RemoteCaptioner {
    client: Arc<RemoteClient>,
}

impl RemoteCaptioner {
    pub fn new(client: Arc<RemoteClient>) -> Self {
        Self { client }
    }

    fn caption(&self, payload: Value) -> Result<String> {
        let ep = Endpoint::Caption;
        let resp = self.client.call(ep, &payload)?;
        field(ep, &resp, "caption")?
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| protocol(ep, "`caption` is not a string"))
    }
}

impl Captioner for RemoteCaptioner {
    fn caption_chunk(&self, chunk: &Chunk) -> Result<String> {
        self.caption(json!({ "captions": [], "tags": chunk.tags() }))
    }

    fn summarize(&self, captions: &[String]) -> Result<String> {
        self.caption(json!({ "captions": captions, "tags": [] }))
    }

    fn deterministic(&self) -> bool {
        false
    }
}

pub struct RemoteGenerator {
    client: Arc<RemoteClient>,
}

impl RemoteGenerator {
    pub fn new(client: Arc<RemoteClient>) -> Self {
        Self { client }
    }
}

impl Generator for RemoteGenerator {
    fn generate(&self, bundle: &PromptBundle) -> Result<String> {
        let ep = Endpoint::Generate;
        let resp = self.client.call(ep, &json!({ "bundle": bundle.to_json(true) }))?;
        field(ep, &resp, "text")?
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| protocol(ep, "`text` is not a string"))
    }

    fn deterministic(&self) -> bool {
        false
    }
}

pub struct RemoteJudge {
    client: Arc<RemoteClient>,
}

impl RemoteJudge {
    pub fn new(client: Arc<RemoteClient>) -> Self {
        Self { client }
    }
}

impl Judge for RemoteJudge {
    fn judge(&self, question: &str, reference: &str, prediction: &str) -> Result<Judgement> {
        let ep = Endpoint::Judge;
        let resp = self.client.call(
            ep,
            &json!({ "question": question, "reference": reference, "prediction": prediction }),
        )?;
        let j: Judgement = serde_json::from_value(resp).map_err(|e| protocol(ep, format!("bad judgement: {e}")))?;
        if j.score > 5 {
            return Err(protocol(ep, format!("score {} outside 0..=5", j.score)));
        }
        Ok(j)
    }

    fn deterministic(&self) -> bool {
        false
    }
}
