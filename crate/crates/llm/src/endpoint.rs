use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LlmError {
    #[error("endpoint unreachable after {attempts} attempts: {message}")]
    EndpointUnreachable { attempts: u32, message: String },
    #[error("authentication rejected: {0}")]
    AuthError(String),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("invalid endpoint configuration: {0}")]
    Config(String),
    #[error("cache write failed: {0}")]
    Cache(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub usage: Option<TokenUsage>,
}

/// Anything that turns one user message into one completion.
///
/// `index` is the sample number within a prompt; remote endpoints ignore
/// it, the mock oracle uses it to derive independent draws.
pub trait ChatEndpoint: Send + Sync {
    fn model_name(&self) -> &str;
    fn complete(&self, prompt: &str, temperature: f64, index: usize) -> Result<Completion, LlmError>;
}
