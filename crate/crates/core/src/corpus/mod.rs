//! Ratings and item catalogs, content documents, user sampling and the
//! stratified example / feedback / evaluation split.

mod documents;
mod io;
mod sampling;
mod title;

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{ItemId, UserId};

pub use documents::{build_content_document, catalog_documents, compute_token_stats, ContentLevel, TokenStats};
pub use io::{load_items, load_ratings, load_splits, write_splits};
pub use sampling::{sample_users, split_user, split_users, SplitSize, UserSampling};
pub use title::normalize_title;

/// Lowest and highest value on the rating scale.
pub const RATING_MIN: f64 = 1.0;
pub const RATING_MAX: f64 = 5.0;
/// Ratings at or above this value are positive ("liked").
pub const POSITIVE_THRESHOLD: f64 = 3.0;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}:{line}: rating {rating} outside [1, 5]")]
    RatingOutOfRange {
        path: PathBuf,
        line: usize,
        rating: f64,
    },
    #[error("duplicate item id {0}")]
    DuplicateItem(ItemId),
    #[error("duplicate interaction for user {user} and item {item}")]
    DuplicateInteraction { user: UserId, item: ItemId },
    #[error("level 4 documents require corpus token statistics")]
    MissingTokenStats,
    #[error("token statistics need at least one nonempty document")]
    EmptyCorpus,
    #[error("percentile band must satisfy 0 <= lo < hi <= 100, got {lo}..{hi}")]
    InvalidBand { lo: f64, hi: f64 },
    #[error("only {eligible} eligible users, {requested} requested (short by {})", requested - eligible)]
    NotEnoughUsers { eligible: usize, requested: usize },
    #[error("user {user}: needs at least 2 positive and 2 negative interactions (has {positives}/{negatives})")]
    ProfileTooSmall {
        user: UserId,
        positives: usize,
        negatives: usize,
    },
    #[error("user {user}: example ({example}) + evaluation ({evaluation}) sizes invalid for {total} interactions")]
    SplitSizes {
        user: UserId,
        example: usize,
        evaluation: usize,
        total: usize,
    },
}

/// A catalog entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Item {
    pub item_id: ItemId,
    pub raw_title: String,
    /// `{article} {title} ({year})`
    pub normalized_title: String,
    pub release_year: i32,
    pub genres: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra_metadata: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supplement_text: Option<String>,
}

impl Item {
    pub fn new(item_id: ItemId, raw_title: &str, release_year: i32, genres: Vec<String>) -> Self {
        Self {
            item_id,
            raw_title: raw_title.to_owned(),
            normalized_title: normalize_title(raw_title, release_year),
            release_year,
            genres,
            extra_metadata: BTreeMap::new(),
            supplement_text: None,
        }
    }
}

/// One (user, item, rating) tuple.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub user_id: UserId,
    pub item_id: ItemId,
    pub rating: f64,
}

impl Interaction {
    pub fn new(user_id: impl Into<UserId>, item_id: impl Into<ItemId>, rating: f64) -> Self {
        Self {
            user_id: user_id.into(),
            item_id: item_id.into(),
            rating,
        }
    }

    pub fn is_positive(&self) -> bool {
        self.rating >= POSITIVE_THRESHOLD
    }
}

/// A user's interactions partitioned into example (E), feedback (F) and
/// evaluation (T) sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserSplit {
    pub user_id: UserId,
    pub example_set: Vec<Interaction>,
    pub feedback_set: Vec<Interaction>,
    pub evaluation_set: Vec<Interaction>,
}

impl UserSplit {
    /// Every item the user interacted with outside the evaluation set.
    pub fn known_items(&self) -> impl Iterator<Item = &ItemId> {
        self.example_set
            .iter()
            .chain(&self.feedback_set)
            .map(|i| &i.item_id)
    }
}

/// Item catalog with id lookup. Items keep file order.
#[derive(Clone, Debug, Default)]
pub struct Catalog {
    items: Vec<Item>,
    by_id: HashMap<ItemId, usize>,
}

impl Catalog {
    pub fn from_items(items: Vec<Item>) -> Result<Self, CorpusError> {
        let mut by_id = HashMap::with_capacity(items.len());
        for (idx, item) in items.iter().enumerate() {
            if by_id.insert(item.item_id.clone(), idx).is_some() {
                return Err(CorpusError::DuplicateItem(item.item_id.clone()));
            }
        }
        Ok(Self { items, by_id })
    }

    pub fn get(&self, id: &ItemId) -> Option<&Item> {
        self.by_id.get(id).map(|&i| &self.items[i])
    }

    pub fn items(&self) -> &[Item] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn max_year(&self) -> Option<i32> {
        self.items.iter().map(|i| i.release_year).max()
    }

    pub fn title_of(&self, id: &ItemId) -> Option<&str> {
        self.get(id).map(|i| i.normalized_title.as_str())
    }

    pub(crate) fn get_mut(&mut self, id: &ItemId) -> Option<&mut Item> {
        match self.by_id.get(id) {
            Some(&i) => Some(&mut self.items[i]),
            None => None,
        }
    }
}

/// Groups interactions by user, each profile sorted by item id.
pub fn group_by_user(interactions: &[Interaction]) -> BTreeMap<UserId, Vec<Interaction>> {
    let mut out: BTreeMap<UserId, Vec<Interaction>> = BTreeMap::new();
    for i in interactions {
        out.entry(i.user_id.clone()).or_default().push(i.clone());
    }
    for profile in out.values_mut() {
        profile.sort_by(|a, b| a.item_id.cmp(&b.item_id));
    }
    out
}

/// Number of interactions per item.
pub fn item_interaction_counts(interactions: &[Interaction]) -> HashMap<ItemId, usize> {
    let mut counts = HashMap::new();
    for i in interactions {
        *counts.entry(i.item_id.clone()).or_insert(0) += 1;
    }
    counts
}
