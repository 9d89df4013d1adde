//! Ranking, diversity and popularity metrics over judged recommendation
//! lists. Undefined values are `None`, never zero.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::Interaction;
use crate::embedding::EmbeddingStore;
use crate::ids::ItemId;
use crate::relevancy::{Judge, RelevancyError};

/// Judged items in extraction order; unmatched titles are only counted.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub items: Vec<(ItemId, bool)>,
    pub unmatched_count: usize,
}

impl RankedList {
    pub fn relevance(&self) -> Vec<bool> {
        self.items.iter().map(|(_, r)| *r).collect()
    }

    pub fn ids(&self) -> Vec<ItemId> {
        self.items.iter().map(|(id, _)| id.clone()).collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub precision: Option<f64>,
    pub ndcg: Option<f64>,
    pub map: Option<f64>,
    pub ils: Option<f64>,
    pub coverage: Option<f64>,
    /// Filled in once every session of the cell has finished.
    pub novelty: Option<f64>,
    pub unmatched_ratio: f64,
    pub matched: usize,
    pub judged: usize,
    pub unmatched: usize,
}

pub fn precision(rel: &[bool]) -> Option<f64> {
    if rel.is_empty() {
        return None;
    }
    Some(rel.iter().filter(|r| **r).count() as f64 / rel.len() as f64)
}

fn discount(rank: usize) -> f64 {
    1.0 / ((rank + 1) as f64).log2()
}

/// Binary-gain nDCG; 0 when nothing is relevant.
pub fn ndcg(rel: &[bool]) -> Option<f64> {
    if rel.is_empty() {
        return None;
    }
    let dcg: f64 = rel.iter().enumerate().filter(|(_, r)| **r).map(|(i, _)| discount(i + 1)).sum();
    let hits = rel.iter().filter(|r| **r).count();
    let idcg: f64 = (1..=hits).map(discount).sum();
    Some(if idcg == 0.0 { 0.0 } else { dcg / idcg })
}

/// Mean of precision@i over relevant positions i; 0 when nothing is relevant.
pub fn average_precision(rel: &[bool]) -> Option<f64> {
    if rel.is_empty() {
        return None;
    }
    let (mut hits, mut sum) = (0usize, 0.0);
    for (i, r) in rel.iter().enumerate() {
        if *r {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Some(if hits == 0 { 0.0 } else { sum / hits as f64 })
}

/// Mean pairwise similarity over unordered pairs of stored items.
pub fn ils(store: &EmbeddingStore, items: &[ItemId]) -> Result<Option<f64>, RelevancyError> {
    let idx: Vec<usize> = items
        .iter()
        .map(|id| store.index_of(id).ok_or_else(|| RelevancyError::MissingEmbedding(id.clone())))
        .collect::<Result<_, _>>()?;
    let n = idx.len();
    if n < 2 {
        return Ok(None);
    }
    let mut total = 0.0;
    for a in 0..n {
        for b in a + 1..n {
            total += store.sim_idx(idx[a], idx[b]);
        }
    }
    Ok(Some(total / (n * (n - 1) / 2) as f64))
}

/// Fraction of reference items matched by at least one recommendation.
pub fn coverage(judge: &Judge, recs: &[ItemId], reference: &[Interaction]) -> Result<Option<f64>, RelevancyError> {
    if reference.is_empty() {
        return Ok(None);
    }
    let distinct: Vec<&ItemId> = {
        let mut seen = HashSet::new();
        recs.iter().filter(|id| seen.insert(*id)).collect()
    };
    let mut hit = 0usize;
    for r in reference {
        for i in &distinct {
            if judge.admitted(i, &r.item_id)?.is_some() {
                hit += 1;
                break;
            }
        }
    }
    Ok(Some(hit as f64 / reference.len() as f64))
}

/// Share of sessions whose cumulative recommendations contain each item.
pub fn popularity_table<S: AsRef<[ItemId]>>(sessions: &[S]) -> HashMap<ItemId, f64> {
    let mut counts: HashMap<ItemId, usize> = HashMap::new();
    for s in sessions {
        let uniq: HashSet<&ItemId> = s.as_ref().iter().collect();
        for id in uniq {
            *counts.entry(id.clone()).or_insert(0) += 1;
        }
    }
    let n = sessions.len().max(1) as f64;
    counts.into_iter().map(|(id, c)| (id, c as f64 / n)).collect()
}

/// Recommendation slots of a session: `k(p − 1) + k_f`.
pub fn slot_count(k: usize, p: usize, k_f: usize) -> usize {
    k * p.saturating_sub(1) + k_f
}

/// `Σ (1 − Popularity(i)) / slots` over matched recommendation instances.
pub fn novelty(session_recs: &[ItemId], slots: usize, popularity: &HashMap<ItemId, f64>) -> f64 {
    if slots == 0 {
        return 0.0;
    }
    let sum: f64 = session_recs
        .iter()
        .map(|id| 1.0 - popularity.get(id).copied().unwrap_or(0.0))
        .sum();
    sum / slots as f64
}

pub fn unmatched_ratio(unmatched: usize, slots: usize) -> f64 {
    if slots == 0 {
        return 0.0;
    }
    unmatched as f64 / slots as f64
}
