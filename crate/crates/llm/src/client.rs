//! Cache-first sampling and variant ranking.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;

use rephrase_core::molgraph::VariantList;
use rephrase_core::prompts::{parse_ranking, render_rank_prompt, Template};
use serde::{Deserialize, Serialize};

use crate::cache::{cache_key, ResponseCache};
use crate::config::EndpointConfig;
use crate::endpoint::{ChatEndpoint, LlmError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankOutcome {
    pub ordered: Vec<String>,
    pub best: String,
    pub rank_fallback: bool,
    pub reply: String,
}

pub struct Sampler {
    endpoint: Arc<dyn ChatEndpoint>,
    cache: Arc<ResponseCache>,
    cfg: EndpointConfig,
    requests: AtomicUsize,
    cache_hits: AtomicUsize,
}

impl Sampler {
    pub fn new(endpoint: Arc<dyn ChatEndpoint>, cache: Arc<ResponseCache>, cfg: EndpointConfig) -> Result<Sampler, LlmError> {
        cfg.validate()?;
        Ok(Sampler {
            endpoint,
            cache,
            cfg,
            requests: AtomicUsize::new(0),
            cache_hits: AtomicUsize::new(0),
        })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.cfg
    }

    pub fn model_name(&self) -> &str {
        self.endpoint.model_name()
    }

    /// Endpoint calls issued so far.
    pub fn requests(&self) -> usize {
        self.requests.load(Ordering::Relaxed)
    }

    pub fn cache_hits(&self) -> usize {
        self.cache_hits.load(Ordering::Relaxed)
    }

    /// Returns `m` responses at the sampling temperature.
    pub fn sample(&self, prompt: &str, m: usize) -> Result<Vec<String>, LlmError> {
        self.sample_at(prompt, m, self.cfg.temperature)
    }

    /// Each sample index is looked up in the cache first; misses are
    /// requested with at most `max_in_flight` calls outstanding and stored
    /// before this returns. The first error wins and is returned once every
    /// worker has stopped.
    pub fn sample_at(&self, prompt: &str, m: usize, temperature: f64) -> Result<Vec<String>, LlmError> {
        let model = self.endpoint.model_name().to_string();
        let mut out: Vec<Option<String>> = vec![None; m];
        let mut missing = Vec::new();
        for (i, slot) in out.iter_mut().enumerate() {
            match self.cache.get(&cache_key(&model, prompt, temperature, i)) {
                Some(e) => {
                    self.cache_hits.fetch_add(1, Ordering::Relaxed);
                    *slot = Some(e.response_text);
                }
                None => missing.push(i),
            }
        }
        if missing.is_empty() {
            return Ok(out.into_iter().map(Option::unwrap).collect());
        }

        let next = AtomicUsize::new(0);
        let results: Mutex<Vec<(usize, String)>> = Mutex::new(Vec::new());
        let failure: Mutex<Option<LlmError>> = Mutex::new(None);
        let workers = self.cfg.max_in_flight.min(missing.len());
        thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    if failure.lock().unwrap().is_some() {
                        return;
                    }
                    let k = next.fetch_add(1, Ordering::Relaxed);
                    let Some(&i) = missing.get(k) else { return };
                    self.requests.fetch_add(1, Ordering::Relaxed);
                    let stored = self.endpoint.complete(prompt, temperature, i).and_then(|c| {
                        let key = cache_key(&model, prompt, temperature, i);
                        self.cache.insert(key, c.text.clone(), c.usage)?;
                        Ok(c.text)
                    });
                    match stored {
                        Ok(text) => results.lock().unwrap().push((i, text)),
                        Err(e) => {
                            failure.lock().unwrap().get_or_insert(e);
                            return;
                        }
                    }
                });
            }
        });
        if let Some(e) = failure.into_inner().unwrap() {
            return Err(e);
        }
        for (i, text) in results.into_inner().unwrap() {
            out[i] = Some(text);
        }
        Ok(out.into_iter().map(Option::unwrap).collect())
    }

    /// Sends the ranking prompt once at the ranking temperature and maps
    /// the reply back onto the variants.
    pub fn rank_variants(&self, variants: &VariantList, template: &Template) -> Result<RankOutcome, LlmError> {
        let prompt = render_rank_prompt(template, variants).map_err(|e| LlmError::Config(e.to_string()))?;
        let reply = self
            .sample_at(&prompt.text, 1, self.cfg.rank_temperature)?
            .pop()
            .unwrap_or_default();
        let ranking = parse_ranking(&reply, &variants.variants);
        Ok(RankOutcome {
            ordered: ranking.ordered,
            best: ranking.best,
            rank_fallback: ranking.fallback,
            reply,
        })
    }
}
