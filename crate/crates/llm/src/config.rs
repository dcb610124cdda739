use serde::{Deserialize, Serialize};

use crate::endpoint::LlmError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EndpointConfig {
    /// Base URL up to, not including, `/chat/completions`.
    pub base_url: String,
    pub model_name: String,
    /// Name of the environment variable that holds the API key.
    pub api_key_env: String,
    pub temperature: f64,
    /// Temperature for the variant-ranking request.
    pub rank_temperature: f64,
    pub max_retries: u32,
    pub request_timeout_secs: u64,
    pub max_in_flight: usize,
    /// First retry delay; doubles on each further attempt.
    pub backoff_ms: u64,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            base_url: "https://api.openai.com/v1".to_string(),
            model_name: "gpt-4".to_string(),
            api_key_env: "OPENAI_API_KEY".to_string(),
            temperature: 1.0,
            rank_temperature: 0.0,
            max_retries: 4,
            request_timeout_secs: 60,
            max_in_flight: 4,
            backoff_ms: 500,
        }
    }
}

impl EndpointConfig {
    pub fn validate(&self) -> Result<(), LlmError> {
        if !(self.temperature >= 0.0) || !(self.rank_temperature >= 0.0) {
            return Err(LlmError::Config("temperature must be ≥ 0".into()));
        }
        if self.max_in_flight == 0 {
            return Err(LlmError::Config("max_in_flight must be ≥ 1".into()));
        }
        if self.model_name.is_empty() {
            return Err(LlmError::Config("model_name is empty".into()));
        }
        Ok(())
    }
}
