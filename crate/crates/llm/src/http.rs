//! Blocking client for the chat-completions wire protocol.

use std::thread;
use std::time::Duration;

use log::{debug, warn};
use serde_json::{json, Value};
use ureq::Agent;

use crate::config::EndpointConfig;
use crate::endpoint::{ChatEndpoint, Completion, LlmError, TokenUsage};

pub struct HttpEndpoint {
    agent: Agent,
    url: String,
    model: String,
    api_key: Option<String>,
    max_retries: u32,
    backoff: Duration,
}

impl HttpEndpoint {
    /// Reads the API key from the configured environment variable. A
    /// missing key is allowed for local servers that need none.
    pub fn new(cfg: &EndpointConfig) -> Result<HttpEndpoint, LlmError> {
        cfg.validate()?;
        let api_key = std::env::var(&cfg.api_key_env).ok().filter(|k| !k.is_empty());
        if api_key.is_none() {
            warn!("{} is not set; sending requests without an API key", cfg.api_key_env);
        }
        Ok(Self::with_key(cfg, api_key))
    }

    pub fn with_key(cfg: &EndpointConfig, api_key: Option<String>) -> HttpEndpoint {
        let agent: Agent = Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(cfg.request_timeout_secs.max(1))))
            .http_status_as_error(false)
            .build()
            .into();
        HttpEndpoint {
            agent,
            url: format!("{}/chat/completions", cfg.base_url.trim_end_matches('/')),
            model: cfg.model_name.clone(),
            api_key,
            max_retries: cfg.max_retries,
            backoff: Duration::from_millis(cfg.backoff_ms),
        }
    }

    fn attempt(&self, body: &Value) -> Result<Completion, Attempt> {
        let mut req = self.agent.post(&self.url);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(body).map_err(|e| Attempt::Retry(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Attempt::Retry(format!("reading body: {e}")))?;
        match status {
            200..=299 => parse_completion(&text).map_err(Attempt::Fatal),
            401 | 403 => Err(Attempt::Fatal(LlmError::AuthError(format!("HTTP {status}: {}", snippet(&text))))),
            408 | 409 | 429 | 500..=599 => Err(Attempt::Retry(format!("HTTP {status}: {}", snippet(&text)))),
            _ => Err(Attempt::Fatal(LlmError::MalformedResponse(format!("HTTP {status}: {}", snippet(&text))))),
        }
    }
}

enum Attempt {
    Retry(String),
    Fatal(LlmError),
}

fn snippet(text: &str) -> String {
    text.chars().take(200).collect()
}

fn parse_completion(text: &str) -> Result<Completion, LlmError> {
    let v: Value = serde_json::from_str(text).map_err(|e| LlmError::MalformedResponse(e.to_string()))?;
    let content = v
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| LlmError::MalformedResponse(format!("no choices[0].message.content in {}", snippet(text))))?;
    let usage = v.get("usage").and_then(|u| {
        Some(TokenUsage {
            prompt_tokens: u.get("prompt_tokens")?.as_u64()?,
            completion_tokens: u.get("completion_tokens")?.as_u64()?,
        })
    });
    Ok(Completion {
        text: content.to_string(),
        usage,
    })
}

impl ChatEndpoint for HttpEndpoint {
    fn model_name(&self) -> &str {
        &self.model
    }

    fn complete(&self, prompt: &str, temperature: f64, _index: usize) -> Result<Completion, LlmError> {
        let body = json!({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": temperature,
        });
        let mut delay = self.backoff;
        let mut last = String::new();
        for attempt in 0..=self.max_retries {
            if attempt > 0 {
                debug!("retry {attempt} after {delay:?}: {last}");
                thread::sleep(delay);
                delay = delay.saturating_mul(2);
            }
            match self.attempt(&body) {
                Ok(c) => return Ok(c),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(msg)) => last = msg,
            }
        }
        Err(LlmError::EndpointUnreachable {
            attempts: self.max_retries + 1,
            message: last,
        })
    }
}
