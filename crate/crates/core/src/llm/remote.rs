use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{BridgeConfig, BridgeError, ChatBackend, ChatRequest, Result};

/// OpenAI-compatible `POST /chat/completions` client.
pub struct RemoteBackend {
    agent: ureq::Agent,
    endpoint: String,
    api_key: Option<String>,
}

#[derive(Deserialize)]
struct Completion {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    content: Option<String>,
}

impl RemoteBackend {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder().timeout_global(Some(timeout)).build().into();
        Self { agent, endpoint: endpoint.into(), api_key }
    }

    /// Reads the key from `config.api_key_env`; a missing variable means no
    /// Authorization header (local servers often need none).
    pub fn from_config(config: &BridgeConfig) -> Result<Self> {
        if config.endpoint_url.is_empty() {
            return Err(BridgeError::InvalidRequest("remote backend needs endpoint_url".into()));
        }
        let key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        Ok(Self::new(config.endpoint_url.clone(), key, Duration::from_secs(120)))
    }
}

impl ChatBackend for RemoteBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String> {
        let body = json!({
            "model": request.model,
            "temperature": request.temperature,
            "messages": request.messages,
        });
        let mut req = self.agent.post(&self.endpoint).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(&body).map_err(|e| BridgeError::Backend(e.to_string()))?;
        let completion: Completion =
            resp.body_mut().read_json().map_err(|e| BridgeError::Backend(format!("bad completion body: {e}")))?;
        completion
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| BridgeError::Backend("completion has no message content".into()))
    }
}
