use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use super::config::{ClientConfig, EmbedderConfig, ExperimentConfig, Users};
use super::ExperimentError;
use crate::corpus::{
    catalog_documents, item_interaction_counts, load_items, load_ratings, load_splits, sample_users, split_users,
    write_splits, Catalog, ContentLevel, Interaction, UserSplit,
};
use crate::embedding::{
    build_quantile_index, embed_catalog, read_threshold_cache, write_threshold_cache, EmbeddingProvider, EmbeddingStore,
    LocalHashEmbedder, QuantileIndex, RemoteEmbedder,
};
use crate::exec::Execution;
use crate::hashing::derive_seed;
use crate::llm::{ChatClient, RemoteChatClient, SimulatedRecommender};
use crate::matching::TitleIndex;
use crate::{ItemId, UserId};

/// Everything an experiment reads but never mutates.
pub struct Resources {
    pub catalog: Arc<Catalog>,
    pub interactions: Vec<Interaction>,
    pub splits: BTreeMap<UserId, UserSplit>,
    pub content: Arc<EmbeddingStore>,
    pub quantiles: QuantileIndex,
    pub titles: TitleIndex,
    pub counts: HashMap<ItemId, usize>,
}

impl Resources {
    pub fn new(
        catalog: Catalog,
        interactions: Vec<Interaction>,
        splits: BTreeMap<UserId, UserSplit>,
        content: EmbeddingStore,
        quantiles: QuantileIndex,
    ) -> Self {
        Self {
            titles: TitleIndex::from_catalog(&catalog),
            counts: item_interaction_counts(&interactions),
            catalog: Arc::new(catalog),
            interactions,
            splits,
            content: Arc::new(content),
            quantiles,
        }
    }

    /// Loads data files, splits and caches named in `config`, computing
    /// (and caching) whatever is missing.
    pub fn prepare(config: &ExperimentConfig, exec: Execution) -> Result<Self, ExperimentError> {
        let interactions = load_ratings(&config.data.ratings)?;
        let catalog = load_items(&config.data.items, config.data.supplement.as_deref())?;
        let splits = prepare_splits(config, &interactions)?;
        let content = prepare_embeddings(config, &catalog)?;
        let quantiles = prepare_thresholds(config, &content, exec)?;
        Ok(Self::new(catalog, interactions, splits, content, quantiles))
    }

    pub fn client(&self, config: &ClientConfig) -> Result<Box<dyn ChatClient>, ExperimentError> {
        Ok(match config {
            ClientConfig::Simulated(sim) => Box::new(SimulatedRecommender::new(
                self.catalog.clone(),
                self.content.clone(),
                &self.counts,
                sim.clone(),
            )),
            ClientConfig::Remote(remote) => Box::new(RemoteChatClient::from_env(remote.clone())?),
        })
    }
}

/// Chooses the block users and splits their profiles. Splits are read from
/// `data.splits` when that file exists and written there otherwise.
pub fn prepare_splits(
    config: &ExperimentConfig,
    interactions: &[Interaction],
) -> Result<BTreeMap<UserId, UserSplit>, ExperimentError> {
    if let Some(path) = &config.data.splits {
        if path.exists() {
            let splits = load_splits(path)?;
            if let Users::Ids(ids) = &config.users {
                return Ok(splits.into_iter().filter(|(u, _)| ids.contains(u)).collect());
            }
            return Ok(splits);
        }
    }
    let c = &config.constants;
    let users = match &config.users {
        Users::Ids(ids) => ids.clone(),
        Users::Sample(rules) => sample_users(interactions, rules, derive_seed(c.seed, &["users"]))?,
    };
    let splits = split_users(interactions, &users, c.example_size, c.eval_size, derive_seed(c.seed, &["splits"]))?;
    if splits.is_empty() {
        return Err(ExperimentError::Config("no user could be split".into()));
    }
    if let Some(path) = &config.data.splits {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| ExperimentError::io(path, e))?;
        }
        write_splits(path, &splits.values().cloned().collect::<Vec<_>>())?;
    }
    Ok(splits)
}

pub fn content_level(config: &ExperimentConfig) -> Result<ContentLevel, ExperimentError> {
    ContentLevel::new(config.constants.content_level)
        .ok_or_else(|| ExperimentError::Config(format!("content_level must be 1-4, got {}", config.constants.content_level)))
}

pub fn embedding_provider(config: &EmbedderConfig) -> Result<Box<dyn EmbeddingProvider>, ExperimentError> {
    Ok(match config {
        EmbedderConfig::Local { dim } => {
            if *dim == 0 {
                return Err(ExperimentError::Config("embedding dim must be positive".into()));
            }
            Box::new(LocalHashEmbedder::new(*dim))
        }
        EmbedderConfig::Remote(remote) => Box::new(RemoteEmbedder::from_env(remote.clone())?),
    })
}

/// Content embeddings at the configured level, through the cache file.
pub fn prepare_embeddings(config: &ExperimentConfig, catalog: &Catalog) -> Result<EmbeddingStore, ExperimentError> {
    let level = content_level(config)?;
    let provider = embedding_provider(&config.embedding)?;
    let docs = catalog_documents(catalog, level)?;
    Ok(embed_catalog(provider.as_ref(), &docs, level, config.data.embeddings.as_deref(), false)?)
}

/// Quantile thresholds, reused from `data.thresholds` when the cached file
/// matches `q` and covers every item.
pub fn prepare_thresholds(
    config: &ExperimentConfig,
    store: &EmbeddingStore,
    exec: Execution,
) -> Result<QuantileIndex, ExperimentError> {
    let q = config.constants.q;
    if let Some(path) = &config.data.thresholds {
        if path.exists() {
            match read_threshold_cache(path) {
                Ok(idx) if idx.q() == q && store.ids().iter().all(|id| idx.epsilon(id).is_some()) => return Ok(idx),
                Ok(_) => tracing::info!(path = %path.display(), "threshold cache is stale; rebuilding"),
                Err(e) => tracing::warn!(path = %path.display(), error = %e, "unreadable threshold cache; rebuilding"),
            }
        }
    }
    let idx = build_quantile_index(store, q, exec)?;
    if let Some(path) = &config.data.thresholds {
        write_threshold_cache(path, &idx)?;
    }
    Ok(idx)
}
