//! Unit-norm content embeddings: storage, cosine similarity, per-item
//! similarity-quantile thresholds and exact nearest-neighbour lookup.

mod cache;
mod provider;
mod quantile;

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::ContentLevel;
use crate::ids::ItemId;

pub use cache::{embed_catalog, read_embedding_cache, write_embedding_cache};
pub use provider::{EmbeddingProvider, LocalHashEmbedder, RemoteEmbedder, RemoteEmbedderConfig, EMBED_API_KEY_ENV};
pub use quantile::{build_quantile_index, quantile_rank, read_threshold_cache, write_threshold_cache, QuantileIndex};

/// Tolerance on the unit-norm invariant.
pub const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("zero-norm vector{}", .0.as_ref().map(|id| format!(" for item {id}")).unwrap_or_default())]
    ZeroNorm(Option<ItemId>),
    #[error("document produced no tokens")]
    EmptyDocument,
    #[error("no embedding for item {0}")]
    Missing(ItemId),
    #[error("duplicate embedding for item {0}")]
    Duplicate(ItemId),
    #[error("need at least 2 items to build quantile thresholds, have {0}")]
    TooFewItems(usize),
    #[error("quantile must lie in (0, 1), got {0}")]
    InvalidQuantile(f64),
    #[error("no documents to embed")]
    NoDocuments,
    #[error("provider {provider} failed for {} item(s): {message}", failed.len())]
    Provider {
        provider: String,
        failed: Vec<ItemId>,
        message: String,
    },
    #[error("embedding provider misconfigured: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Cache { path: String, message: String },
}

/// One item's vector at one content level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub item_id: ItemId,
    pub level: ContentLevel,
    pub dim: usize,
    pub vector: Vec<f64>,
}

pub fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

pub fn norm(u: &[f64]) -> f64 {
    dot(u, u).sqrt()
}

/// Cosine similarity `Σ uᵢvᵢ / (‖u‖‖v‖)`, clamped into [-1, 1].
pub fn cosine_sim(u: &[f64], v: &[f64]) -> Result<f64, EmbeddingError> {
    if u.len() != v.len() {
        return Err(EmbeddingError::DimensionMismatch {
            expected: u.len(),
            got: v.len(),
        });
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 || !nu.is_finite() || !nv.is_finite() {
        return Err(EmbeddingError::ZeroNorm(None));
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// Scales `v` to unit length.
pub fn normalize(mut v: Vec<f64>) -> Result<Vec<f64>, EmbeddingError> {
    let n = norm(&v);
    if n == 0.0 || !n.is_finite() {
        return Err(EmbeddingError::ZeroNorm(None));
    }
    v.iter_mut().for_each(|x| *x /= n);
    Ok(v)
}

/// Dense row-major store of unit vectors keyed by item id.
///
/// Every row is unit length, so similarity between stored items is a plain
/// dot product.
#[derive(Clone, Debug)]
pub struct EmbeddingStore {
    level: Option<ContentLevel>,
    dim: usize,
    ids: Vec<ItemId>,
    index: HashMap<ItemId, usize>,
    data: Vec<f64>,
}

impl EmbeddingStore {
    pub fn new(dim: usize, level: Option<ContentLevel>) -> Self {
        Self {
            level,
            dim,
            ids: Vec::new(),
            index: HashMap::new(),
            data: Vec::new(),
        }
    }

    /// Builds a store from `(id, vector)` pairs; rows are ordered by id and
    /// re-normalized.
    pub fn from_vectors(
        dim: usize,
        level: Option<ContentLevel>,
        mut vectors: Vec<(ItemId, Vec<f64>)>,
    ) -> Result<Self, EmbeddingError> {
        vectors.sort_by(|a, b| a.0.cmp(&b.0));
        let mut store = Self::new(dim, level);
        for (id, v) in vectors {
            store.insert(id, v)?;
        }
        Ok(store)
    }

    pub fn from_records(records: Vec<EmbeddingRecord>) -> Result<Self, EmbeddingError> {
        let first = records.first().ok_or(EmbeddingError::NoDocuments)?;
        let (dim, level) = (first.dim, first.level);
        let vectors = records.into_iter().map(|r| (r.item_id, r.vector)).collect();
        Self::from_vectors(dim, Some(level), vectors)
    }

    pub fn insert(&mut self, id: ItemId, vector: Vec<f64>) -> Result<(), EmbeddingError> {
        if vector.len() != self.dim {
            return Err(EmbeddingError::DimensionMismatch {
                expected: self.dim,
                got: vector.len(),
            });
        }
        if self.index.contains_key(&id) {
            return Err(EmbeddingError::Duplicate(id));
        }
        let v = normalize(vector).map_err(|_| EmbeddingError::ZeroNorm(Some(id.clone())))?;
        self.index.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.data.extend(v);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn level(&self) -> Option<ContentLevel> {
        self.level
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[ItemId] {
        &self.ids
    }

    pub fn contains(&self, id: &ItemId) -> bool {
        self.index.contains_key(id)
    }

    pub fn index_of(&self, id: &ItemId) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn row(&self, idx: usize) -> &[f64] {
        &self.data[idx * self.dim..(idx + 1) * self.dim]
    }

    pub fn vector(&self, id: &ItemId) -> Option<&[f64]> {
        self.index_of(id).map(|i| self.row(i))
    }

    /// Similarity between stored rows `i` and `j`.
    pub fn sim_idx(&self, i: usize, j: usize) -> f64 {
        dot(self.row(i), self.row(j)).clamp(-1.0, 1.0)
    }

    pub fn similarity(&self, a: &ItemId, b: &ItemId) -> Result<f64, EmbeddingError> {
        let i = self.index_of(a).ok_or_else(|| EmbeddingError::Missing(a.clone()))?;
        let j = self.index_of(b).ok_or_else(|| EmbeddingError::Missing(b.clone()))?;
        Ok(self.sim_idx(i, j))
    }

    /// Records for serialization. Stores without a content level (learned
    /// factors) report level 1.
    pub fn records(&self) -> Vec<EmbeddingRecord> {
        let level = self.level.unwrap_or(ContentLevel::BASIC);
        (0..self.len())
            .map(|i| EmbeddingRecord {
                item_id: self.ids[i].clone(),
                level,
                dim: self.dim,
                vector: self.row(i).to_vec(),
            })
            .collect()
    }
}

/// Top-`k` stored items by cosine similarity to `query`, descending, ties
/// broken by ascending item id. Excluded ids are never returned; asking for
/// more than is available returns everything available.
pub fn nearest_items(
    store: &EmbeddingStore,
    query: &[f64],
    k: usize,
    exclude: &HashSet<ItemId>,
) -> Result<Vec<ItemId>, EmbeddingError> {
    let query = normalize(query.to_vec())?;
    if query.len() != store.dim() {
        return Err(EmbeddingError::DimensionMismatch {
            expected: store.dim(),
            got: query.len(),
        });
    }
    let mut scored: Vec<(f64, &ItemId)> = store
        .ids()
        .iter()
        .enumerate()
        .filter(|(_, id)| !exclude.contains(*id))
        .map(|(i, id)| (dot(&query, store.row(i)), id))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    Ok(scored.into_iter().take(k).map(|(_, id)| id.clone()).collect())
}
