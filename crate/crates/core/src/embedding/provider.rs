use std::collections::HashSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{text_hash, EmbeddingCache, EmbeddingProvider, EmbeddingService, ProviderHandshake};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub batch_size: usize,
    pub max_in_flight: usize,
    pub max_attempts: u32,
    pub backoff_ms: u64,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            batch_size: 64,
            max_in_flight: 4,
            max_attempts: 3,
            backoff_ms: 200,
        }
    }
}

/// Serves vectors from an [`EmbeddingCache`], fetching misses from an
/// optional service and writing them back before returning.
pub struct CachedProvider {
    model_id: String,
    cache: Arc<EmbeddingCache>,
    service: Option<Box<dyn EmbeddingService>>,
    handshake: Option<ProviderHandshake>,
    config: ProviderConfig,
}

fn retryable(e: &Error) -> bool {
    match e {
        Error::ServiceUnreachable(_) => true,
        Error::Service { status, .. } => *status >= 500 || *status == 429,
        _ => false,
    }
}

impl CachedProvider {
    /// Offline provider: any text not already cached is an error.
    pub fn cache_only(model_id: impl Into<String>, cache: Arc<EmbeddingCache>) -> Self {
        CachedProvider {
            model_id: model_id.into(),
            cache,
            service: None,
            handshake: None,
            config: ProviderConfig::default(),
        }
    }

    /// Connects to `service`, checking that it serves the pinned model with a
    /// dimension consistent with the cache.
    pub fn with_service(
        model_id: impl Into<String>,
        cache: Arc<EmbeddingCache>,
        service: Box<dyn EmbeddingService>,
        config: ProviderConfig,
    ) -> Result<Self> {
        if config.batch_size == 0 || config.max_in_flight == 0 || config.max_attempts == 0 {
            return Err(Error::InvalidConfig(
                "batch_size, max_in_flight and max_attempts must be positive".into(),
            ));
        }
        let model_id = model_id.into();
        let health = service.health()?;
        if health.model != model_id {
            return Err(Error::ModelMismatch {
                expected: model_id,
                found: health.model,
            });
        }
        if let Some(cached) = cache.model_dim(&model_id) {
            if cached != health.dim {
                return Err(Error::DimensionMismatch {
                    expected: cached,
                    found: health.dim,
                });
            }
        }
        let handshake = ProviderHandshake {
            model_id: health.model,
            dim: health.dim,
            service_version: health.version,
        };
        Ok(CachedProvider {
            model_id,
            cache,
            service: Some(service),
            handshake: Some(handshake),
            config,
        })
    }

    pub fn handshake(&self) -> Option<&ProviderHandshake> {
        self.handshake.as_ref()
    }

    pub fn cache(&self) -> &EmbeddingCache {
        &self.cache
    }

    fn fetch_batch(&self, service: &dyn EmbeddingService, batch: &[&str]) -> Result<Vec<Vec<f32>>> {
        let mut attempt = 0;
        let resp = loop {
            match service.embed(&self.model_id, batch) {
                Ok(r) => break r,
                Err(e) if retryable(&e) && attempt + 1 < self.config.max_attempts => {
                    std::thread::sleep(Duration::from_millis(self.config.backoff_ms << attempt));
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        };
        if resp.model != self.model_id {
            return Err(Error::ModelMismatch {
                expected: self.model_id.clone(),
                found: resp.model,
            });
        }
        if resp.vectors.len() != batch.len() {
            return Err(Error::Service {
                status: 200,
                message: format!(
                    "service returned {} vectors for {} texts",
                    resp.vectors.len(),
                    batch.len()
                ),
            });
        }
        let dim = self.handshake.as_ref().map_or(resp.dim, |h| h.dim);
        for v in &resp.vectors {
            if v.len() != dim || resp.dim != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: v.len(),
                });
            }
        }
        Ok(resp.vectors)
    }

    /// Fetches `misses` in batches with at most `max_in_flight` requests
    /// outstanding, storing each batch as it arrives.
    fn fill(&self, service: &dyn EmbeddingService, misses: &[&str]) -> Result<()> {
        let batches: Vec<&[&str]> = misses.chunks(self.config.batch_size).collect();
        let next = AtomicUsize::new(0);
        let first_error: Mutex<Option<Error>> = Mutex::new(None);
        let workers = self.config.max_in_flight.min(batches.len());
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    if first_error.lock().unwrap().is_some() {
                        return;
                    }
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(batch) = batches.get(i) else { return };
                    let stored = self.fetch_batch(service, batch).and_then(|vectors| {
                        let items: Vec<(&str, &[f32])> =
                            batch.iter().zip(&vectors).map(|(t, v)| (*t, v.as_slice())).collect();
                        self.cache.put_many(&self.model_id, &items)
                    });
                    if let Err(e) = stored {
                        first_error.lock().unwrap().get_or_insert(e);
                        return;
                    }
                });
            }
        });
        match first_error.into_inner().unwrap() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}

impl EmbeddingProvider for CachedProvider {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn embed_texts(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>> {
        let hashes: Vec<[u8; 32]> = texts.iter().map(|t| text_hash(t, &self.model_id)).collect();
        let mut seen: HashSet<[u8; 32]> = HashSet::new();
        let mut misses: Vec<&str> = Vec::new();
        for (t, h) in texts.iter().zip(&hashes) {
            if !self.cache.contains_hash(h) && seen.insert(*h) {
                misses.push(t);
            }
        }
        if !misses.is_empty() {
            match &self.service {
                Some(service) => self.fill(service.as_ref(), &misses)?,
                None => {
                    return Err(Error::CacheMiss {
                        hash: hex::encode(text_hash(misses[0], &self.model_id)),
                    })
                }
            }
        }
        hashes
            .iter()
            .map(|h| {
                self.cache
                    .get_hash(h)
                    .ok_or_else(|| Error::CacheMiss { hash: hex::encode(h) })
            })
            .collect()
    }
}
