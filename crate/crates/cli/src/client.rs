//! Clients used by the generation stage.

use std::time::Duration;

use agentdial_core::generate::{GenParams, GenerationClient, RateLimited, RateLimiter, ReplayClient, TransportError};
use serde_json::{json, Value};

use crate::config::{ClientKind, GenerationConfig};

/// Chat-completions style endpoint: posts one user message and returns the
/// first choice's content.
pub struct HttpClient {
    endpoint: String,
    api_key: String,
}

impl HttpClient {
    pub fn new(endpoint: impl Into<String>, api_key: impl Into<String>) -> Self {
        HttpClient {
            endpoint: endpoint.into(),
            api_key: api_key.into(),
        }
    }

    fn agent(timeout: Duration) -> ureq::Agent {
        ureq::Agent::config_builder().timeout_global(Some(timeout)).build().into()
    }
}

/// Pulls `choices[0].message.content` out of a chat-completions reply.
pub fn extract_content(reply: &Value) -> Result<String, TransportError> {
    reply
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| TransportError("reply has no choices[0].message.content".into()))
}

impl GenerationClient for HttpClient {
    fn send(&self, prompt: &str, params: &GenParams) -> Result<String, TransportError> {
        let body = json!({
            "model": params.model_id,
            "temperature": params.temperature,
            "max_tokens": params.max_output_tokens,
            "messages": [{"role": "user", "content": prompt}],
        });
        let mut resp = Self::agent(params.timeout)
            .post(&self.endpoint)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(&body)
            .map_err(|e| TransportError(e.to_string()))?;
        let reply: Value = resp.body_mut().read_json().map_err(|e| TransportError(e.to_string()))?;
        extract_content(&reply)
    }
}

/// Builds the configured client. The http client reads its credential from
/// the environment variable named in the config.
pub fn build_client(cfg: &GenerationConfig) -> Result<Box<dyn GenerationClient>, String> {
    let inner: Box<dyn GenerationClient> = match cfg.client {
        ClientKind::Replay => {
            let path = cfg.replay_file.as_ref().ok_or("generation.replay_file is not set")?;
            let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            Box::new(ReplayClient::from_jsonl(&text).map_err(|e| format!("{}: {e}", path.display()))?)
        }
        ClientKind::Http => {
            let endpoint = cfg.endpoint.clone().ok_or("generation.endpoint is not set")?;
            let key = std::env::var(&cfg.api_key_env)
                .map_err(|_| format!("environment variable {} is not set", cfg.api_key_env))?;
            Box::new(HttpClient::new(endpoint, key))
        }
    };
    if cfg.requests_per_minute == 0 {
        return Ok(inner);
    }
    Ok(Box::new(RateLimited {
        inner,
        limiter: RateLimiter::per_minute(cfg.requests_per_minute, cfg.concurrency.max(1) as u32),
    }))
}
