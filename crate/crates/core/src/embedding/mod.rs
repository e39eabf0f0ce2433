//! Text embeddings: a content-addressed cache, an HTTP client for the
//! inference service, and providers that combine the two.

mod cache;
mod provider;
mod service;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use cache::EmbeddingCache;
pub use provider::{CachedProvider, ProviderConfig};
pub use service::{EmbedRequest, EmbedResponse, EmbeddingService, HttpService, ServiceHealth};

/// Anything that can turn texts into vectors for a single pinned model.
pub trait EmbeddingProvider: Send + Sync {
    fn model_id(&self) -> &str;

    /// One vector per input text, in input order.
    fn embed_texts(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>>;
}

/// Model identity reported by the inference service.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderHandshake {
    pub model_id: String,
    pub dim: usize,
    pub service_version: Option<String>,
}

/// SHA-256 over the exact text bytes, a zero byte, then the model id.
pub fn text_hash(text: &str, model_id: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(text.as_bytes());
    h.update([0u8]);
    h.update(model_id.as_bytes());
    h.finalize().into()
}

pub fn text_hash_hex(text: &str, model_id: &str) -> String {
    hex::encode(text_hash(text, model_id))
}

/// A fixed in-memory table of vectors; unknown texts are cache misses.
#[derive(Debug, Clone, Default)]
pub struct MemoryProvider {
    model_id: String,
    vectors: HashMap<String, Vec<f32>>,
}

impl MemoryProvider {
    pub fn new(model_id: impl Into<String>) -> Self {
        MemoryProvider {
            model_id: model_id.into(),
            vectors: HashMap::new(),
        }
    }

    pub fn insert(&mut self, text: &str, vector: Vec<f32>) {
        self.vectors.insert(text.to_string(), vector);
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

impl EmbeddingProvider for MemoryProvider {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn embed_texts(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>> {
        texts
            .iter()
            .map(|t| {
                self.vectors.get(*t).cloned().ok_or_else(|| Error::CacheMiss {
                    hash: text_hash_hex(t, &self.model_id),
                })
            })
            .collect()
    }
}
