//! Non-LLM comparison recommenders: NMF-item, NMF-user and Random.

mod nmf;

use std::collections::{HashMap, HashSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corpus::{Catalog, UserSplit};
use crate::embedding::{nearest_items, EmbeddingError, EmbeddingStore};
use crate::{ItemId, UserId};

pub use nmf::{holdout, nmf_fit, nmf_train, Checkpoint, NmfConfig, NmfHeader, NmfModel, RATING_SCALE};

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("invalid baseline configuration: {0}")]
    Config(String),
    #[error("training diverged at update {update}")]
    Divergence { update: usize },
    #[error("user {0} has no factor row")]
    UnknownUser(UserId),
    #[error("user {0} has no positive example items")]
    NoPositiveExamples(UserId),
    #[error("only {available} candidate items for {requested} recommendations")]
    InsufficientItems { available: usize, requested: usize },
    #[error("model checkpoint {path}: {message}")]
    Checkpoint { path: String, message: String },
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

/// Every candidate gathered by NMF-item before reduction: the `k_f` nearest
/// items (in `space`) of each positive example, duplicates kept. Example
/// items are never candidates.
pub fn nmf_item_pool(space: &EmbeddingStore, split: &UserSplit, k_f: usize) -> Result<Vec<ItemId>, BaselineError> {
    let positives: Vec<&ItemId> = split
        .example_set
        .iter()
        .filter(|r| r.is_positive() && space.contains(&r.item_id))
        .map(|r| &r.item_id)
        .collect();
    if positives.is_empty() {
        return Err(BaselineError::NoPositiveExamples(split.user_id.clone()));
    }
    let exclude: HashSet<ItemId> = split.example_set.iter().map(|r| r.item_id.clone()).collect();
    let mut pool = Vec::with_capacity(k_f * positives.len());
    for id in positives {
        let query = space.vector(id).expect("filtered on contains");
        pool.extend(nearest_items(space, query, k_f, &exclude)?);
    }
    Ok(pool)
}

/// NMF-item: pool neighbours of each positive example, rank the distinct
/// pool items by summed similarity to all positive examples, keep `k_f`.
pub fn nmf_item_recommend(space: &EmbeddingStore, split: &UserSplit, k_f: usize) -> Result<Vec<ItemId>, BaselineError> {
    let pool = nmf_item_pool(space, split, k_f)?;
    let positives: Vec<&ItemId> = split
        .example_set
        .iter()
        .filter(|r| r.is_positive() && space.contains(&r.item_id))
        .map(|r| &r.item_id)
        .collect();
    let mut seen = HashSet::new();
    let mut scored = Vec::new();
    for id in pool {
        if !seen.insert(id.clone()) {
            continue;
        }
        let mut score = 0.0;
        for p in &positives {
            score += space.similarity(&id, p)?;
        }
        scored.push((score, id));
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    Ok(scored.into_iter().take(k_f).map(|(_, id)| id).collect())
}

/// NMF-user: items by descending predicted affinity, ties by ascending id.
pub fn nmf_user_recommend(
    model: &NmfModel,
    user: &UserId,
    k_f: usize,
    exclude: &HashSet<ItemId>,
) -> Result<Vec<ItemId>, BaselineError> {
    let scores = model.affinities(user).ok_or_else(|| BaselineError::UnknownUser(user.clone()))?;
    let mut ranked: Vec<(f64, &ItemId)> = scores
        .into_iter()
        .zip(&model.item_ids)
        .filter(|(_, id)| !exclude.contains(*id))
        .collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    Ok(ranked.into_iter().take(k_f).map(|(_, id)| id.clone()).collect())
}

/// `k_f` distinct catalog items drawn uniformly without replacement.
pub fn random_recommend(
    catalog: &Catalog,
    k_f: usize,
    seed: u64,
    exclude: &HashSet<ItemId>,
) -> Result<Vec<ItemId>, BaselineError> {
    let mut candidates: Vec<&ItemId> = catalog
        .items()
        .iter()
        .map(|i| &i.item_id)
        .filter(|id| !exclude.contains(*id))
        .collect();
    candidates.sort();
    if candidates.len() < k_f {
        return Err(BaselineError::InsufficientItems {
            available: candidates.len(),
            requested: k_f,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(rand::seq::index::sample(&mut rng, candidates.len(), k_f)
        .into_iter()
        .map(|i| candidates[i].clone())
        .collect())
}

/// Interactions the NMF baselines may train on: everything except the
/// evaluation sets of the users being evaluated.
pub fn training_interactions<'a>(
    all: &'a [crate::corpus::Interaction],
    splits: impl IntoIterator<Item = &'a UserSplit>,
) -> Vec<crate::corpus::Interaction> {
    let held: HashMap<&UserId, HashSet<&ItemId>> = splits
        .into_iter()
        .map(|s| (&s.user_id, s.evaluation_set.iter().map(|r| &r.item_id).collect()))
        .collect();
    all.iter()
        .filter(|r| !held.get(&r.user_id).is_some_and(|items| items.contains(&r.item_id)))
        .cloned()
        .collect()
}
