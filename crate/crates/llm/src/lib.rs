//! Sampling from chat-completions endpoints with a replayable cache, and a
//! seeded in-process oracle for offline runs.

mod cache;
mod client;
mod config;
mod endpoint;
mod http;
mod mock;

pub use cache::{cache_key, CacheEntry, ResponseCache};
pub use client::{RankOutcome, Sampler};
pub use config::EndpointConfig;
pub use endpoint::{ChatEndpoint, Completion, LlmError, TokenUsage};
pub use http::HttpEndpoint;
pub use mock::{MockBehavior, MockItem, MockOracle, MockReaction, RankPreference};
