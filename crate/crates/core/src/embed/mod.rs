//! Instruction-prompted text embeddings with a bit-exact cache.

pub mod instructions;
pub mod store;
pub mod vector;

use std::collections::HashSet;

use rayon::prelude::*;

use crate::endpoint::EmbeddingEndpoint;
use crate::error::{Error, Result};

pub use instructions::{InstructionPrompt, Side};
pub use store::{embedding_key, EmbeddingStore};
pub use vector::{aggregate_avg, cosine, dot, EmbeddingVector};

/// An embedding endpoint paired with its cache.
pub struct Embedder<'a> {
    pub endpoint: &'a dyn EmbeddingEndpoint,
    pub store: &'a EmbeddingStore,
    pub max_in_flight: usize,
}

impl<'a> Embedder<'a> {
    pub fn new(endpoint: &'a dyn EmbeddingEndpoint, store: &'a EmbeddingStore, max_in_flight: usize) -> Result<Self> {
        if endpoint.model_id() != store.model_id() {
            return Err(Error::Precondition(format!(
                "embedding cache is for `{}` but the endpoint serves `{}`",
                store.model_id(),
                endpoint.model_id()
            )));
        }
        Ok(Embedder { endpoint, store, max_in_flight })
    }

    fn key(&self, instruction: &str, text: &str) -> store::Key {
        embedding_key(self.store.model_id(), instruction, text)
    }

    /// Cached vector, if present.
    pub fn cached(&self, instruction: &str, text: &str) -> Option<EmbeddingVector> {
        self.store.get(&self.key(instruction, text))
    }

    fn fetch(&self, instruction: &str, text: &str) -> Result<EmbeddingVector> {
        let raw = self.endpoint.embed(&instructions::render(instruction, text))?;
        if let Some(dim) = self.store.dim() {
            if raw.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, actual: raw.len() });
            }
        }
        EmbeddingVector::normalized(raw)
    }

    /// Unit-norm embedding of `text` under `instruction`.
    pub fn embed_text(&self, text: &str, instruction: &str) -> Result<EmbeddingVector> {
        if text.trim().is_empty() {
            return Err(Error::Precondition("cannot embed an empty text".into()));
        }
        let key = self.key(instruction, text);
        if let Some(hit) = self.store.get(&key) {
            return Ok(hit);
        }
        let v = self.fetch(instruction, text)?;
        self.store.insert(key, v.clone())?;
        Ok(v)
    }

    /// Embeds `(instruction, text)` pairs, requesting each distinct miss once and
    /// in parallel. Vectors are cached in input order.
    pub fn embed_batch(&self, items: &[(&str, &str)]) -> Result<Vec<EmbeddingVector>> {
        if let Some((_, _)) = items.iter().find(|(_, t)| t.trim().is_empty()) {
            return Err(Error::Precondition("cannot embed an empty text".into()));
        }
        let mut seen = HashSet::new();
        let misses: Vec<(store::Key, &str, &str)> = items
            .iter()
            .map(|&(i, t)| (self.key(i, t), i, t))
            .filter(|(k, _, _)| self.store.get(k).is_none() && seen.insert(*k))
            .collect();
        if !misses.is_empty() {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(self.max_in_flight.max(1))
                .build()
                .map_err(|e| Error::Precondition(e.to_string()))?;
            let fetched: Vec<Result<EmbeddingVector>> =
                pool.install(|| misses.par_iter().map(|(_, i, t)| self.fetch(i, t)).collect());
            for ((key, _, _), v) in misses.iter().zip(fetched) {
                self.store.insert(*key, v?)?;
            }
        }
        items
            .iter()
            .map(|&(i, t)| self.store.get(&self.key(i, t)).ok_or_else(|| Error::MissingEmbedding(t.to_owned())))
            .collect()
    }

    /// One row per label or caption, in input order.
    pub fn embed_label_set(&self, labels: &[String], instruction: &str) -> Result<Vec<EmbeddingVector>> {
        if labels.is_empty() {
            return Err(Error::Precondition("no labels or captions to embed".into()));
        }
        let items: Vec<(&str, &str)> = labels.iter().map(|l| (instruction, l.as_str())).collect();
        self.embed_batch(&items)
    }
}
