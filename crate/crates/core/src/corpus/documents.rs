use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{Catalog, CorpusError, Item};
use crate::ids::ItemId;
use crate::text::{is_stopword, tokenize};

/// Amount of item text that goes into an embedding document.
///
/// 1: title, year, genres. 2: + extra metadata. 3: + supplement text.
/// 4: level 3 with stop words and the most frequent tokens removed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct ContentLevel(u8);

impl ContentLevel {
    pub const BASIC: ContentLevel = ContentLevel(1);
    pub const METADATA: ContentLevel = ContentLevel(2);
    pub const SUPPLEMENT: ContentLevel = ContentLevel(3);
    pub const PRUNED: ContentLevel = ContentLevel(4);

    pub fn new(level: u8) -> Option<Self> {
        (1..=4).contains(&level).then_some(Self(level))
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn is_pruned(self) -> bool {
        self.0 == 4
    }
}

impl TryFrom<u8> for ContentLevel {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        Self::new(v).ok_or_else(|| format!("content level must be 1..=4, got {v}"))
    }
}

impl From<ContentLevel> for u8 {
    fn from(l: ContentLevel) -> u8 {
        l.0
    }
}

/// Share of distinct tokens treated as "too frequent" at level 4.
const TOP_TOKEN_PERCENT: usize = 5;

/// Corpus-wide word frequencies and the set of top-5% tokens.
#[derive(Clone, Debug)]
pub struct TokenStats {
    frequencies: BTreeMap<String, u64>,
    top_tokens: HashSet<String>,
    cutoff_frequency: u64,
}

impl TokenStats {
    pub fn frequency(&self, token: &str) -> u64 {
        self.frequencies.get(token).copied().unwrap_or(0)
    }

    pub fn distinct_tokens(&self) -> usize {
        self.frequencies.len()
    }

    /// Lowest frequency that still lands a token in the top set.
    pub fn cutoff_frequency(&self) -> u64 {
        self.cutoff_frequency
    }

    pub fn is_top(&self, token: &str) -> bool {
        self.top_tokens.contains(token)
    }

    pub fn top_tokens(&self) -> &HashSet<String> {
        &self.top_tokens
    }
}

/// Counts word-level tokens over `documents`.
///
/// The top set holds the `ceil(5% · distinct)` most frequent tokens; every
/// token tied with the last of those at the boundary frequency is included
/// as well.
pub fn compute_token_stats<S: AsRef<str>>(documents: &[S]) -> Result<TokenStats, CorpusError> {
    let mut frequencies: BTreeMap<String, u64> = BTreeMap::new();
    for doc in documents {
        for token in tokenize(doc.as_ref()) {
            *frequencies.entry(token).or_insert(0) += 1;
        }
    }
    if frequencies.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let mut counts: Vec<u64> = frequencies.values().copied().collect();
    counts.sort_unstable_by(|a, b| b.cmp(a));
    let n_top = (frequencies.len() * TOP_TOKEN_PERCENT).div_ceil(100).max(1);
    let cutoff_frequency = counts[n_top - 1];
    let top_tokens = frequencies
        .iter()
        .filter(|(_, &f)| f >= cutoff_frequency)
        .map(|(t, _)| t.clone())
        .collect();
    Ok(TokenStats {
        frequencies,
        top_tokens,
        cutoff_frequency,
    })
}

/// Serializes an item into the text that gets embedded.
///
/// Levels 1–3 use one labeled field per line:
///
/// ```text
/// Title: The Matrix (1999)
/// Year: 1999
/// Genres: Action, Sci-Fi
/// Tags: cyberpunk, dystopia      (level >= 2, one line per metadata key)
/// Summary: ...                   (level >= 3, when supplement text exists)
/// ```
///
/// Level 4 is the level-3 text tokenized, with stop words and top tokens
/// dropped, re-joined by single spaces.
pub fn build_content_document(
    item: &Item,
    level: ContentLevel,
    corpus_stats: Option<&TokenStats>,
) -> Result<String, CorpusError> {
    if level.is_pruned() && corpus_stats.is_none() {
        return Err(CorpusError::MissingTokenStats);
    }
    let mut lines = vec![
        format!("Title: {}", item.normalized_title),
        format!("Year: {}", item.release_year),
    ];
    if !item.genres.is_empty() {
        lines.push(format!("Genres: {}", item.genres.join(", ")));
    }
    if level.get() >= 2 {
        for (key, value) in &item.extra_metadata {
            lines.push(format!("{}: {}", label(key), value));
        }
    }
    if level.get() >= 3 {
        if let Some(text) = item.supplement_text.as_deref().map(str::trim).filter(|t| !t.is_empty()) {
            lines.push(format!("Summary: {text}"));
        }
    }
    let doc = lines.join("\n");
    match corpus_stats {
        Some(stats) if level.is_pruned() => Ok(prune(&doc, stats)),
        _ => Ok(doc),
    }
}

/// Documents for every catalog item at `level`. Level 4 token statistics
/// are computed over the level-3 documents of the whole catalog.
pub fn catalog_documents(catalog: &Catalog, level: ContentLevel) -> Result<BTreeMap<ItemId, String>, CorpusError> {
    let stats = if level.is_pruned() {
        let docs: Vec<String> = catalog
            .items()
            .iter()
            .map(|i| build_content_document(i, ContentLevel::SUPPLEMENT, None))
            .collect::<Result<_, _>>()?;
        Some(compute_token_stats(&docs)?)
    } else {
        None
    };
    catalog
        .items()
        .iter()
        .map(|i| Ok((i.item_id.clone(), build_content_document(i, level, stats.as_ref())?)))
        .collect()
}

fn prune(doc: &str, stats: &TokenStats) -> String {
    tokenize(doc)
        .into_iter()
        .filter(|t| !is_stopword(t) && !stats.is_top(t))
        .collect::<Vec<_>>()
        .join(" ")
}

fn label(key: &str) -> String {
    let mut chars = key.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}
