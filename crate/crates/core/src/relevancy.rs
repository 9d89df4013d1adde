//! Rating estimation for recommended items from a user's held-out
//! interactions: a similarity-weighted average over neighbours that clear
//! their own quantile threshold.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Interaction, POSITIVE_THRESHOLD};
use crate::embedding::{EmbeddingStore, QuantileIndex};
use crate::ids::ItemId;

#[derive(Debug, Error, PartialEq)]
pub enum RelevancyError {
    #[error("no embedding for item {0}")]
    MissingEmbedding(ItemId),
    #[error("no similarity threshold for item {0}")]
    MissingThreshold(ItemId),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelevanceJudgment {
    pub item_id: ItemId,
    pub estimated_rating: Option<f64>,
    pub relevant: bool,
    pub admitted_neighbors: usize,
}

/// Embeddings plus per-item thresholds: everything needed to decide whether
/// two items "match".
#[derive(Clone, Copy)]
pub struct Judge<'a> {
    pub store: &'a EmbeddingStore,
    pub quantiles: &'a QuantileIndex,
}

impl<'a> Judge<'a> {
    pub fn new(store: &'a EmbeddingStore, quantiles: &'a QuantileIndex) -> Self {
        Self { store, quantiles }
    }

    fn index(&self, id: &ItemId) -> Result<usize, RelevancyError> {
        self.store.index_of(id).ok_or_else(|| RelevancyError::MissingEmbedding(id.clone()))
    }

    fn epsilon(&self, id: &ItemId) -> Result<f64, RelevancyError> {
        self.quantiles.epsilon(id).ok_or_else(|| RelevancyError::MissingThreshold(id.clone()))
    }

    /// `Some(sim)` when `item` is admitted as a neighbour of reference item
    /// `reference`: `sim ≥ ε(reference)` and `sim > 0`.
    pub fn admitted(&self, item: &ItemId, reference: &ItemId) -> Result<Option<f64>, RelevancyError> {
        let i = self.index(item)?;
        let j = self.index(reference)?;
        let sim = self.store.sim_idx(i, j);
        let eps = self.epsilon(reference)?;
        Ok((sim >= eps && sim > 0.0).then_some(sim))
    }

    /// Weighted rating estimate and the number of admitted neighbours.
    pub fn estimate(&self, item: &ItemId, reference: &[Interaction]) -> Result<(Option<f64>, usize), RelevancyError> {
        let (mut num, mut den, mut n) = (0.0, 0.0, 0);
        for r in reference {
            if let Some(sim) = self.admitted(item, &r.item_id)? {
                num += r.rating * sim;
                den += sim;
                n += 1;
            }
        }
        // validate the item even when the reference set is empty
        self.index(item)?;
        Ok(((n > 0).then(|| num / den), n))
    }

    pub fn judge(&self, item: &ItemId, reference: &[Interaction]) -> Result<RelevanceJudgment, RelevancyError> {
        let (estimated_rating, admitted_neighbors) = self.estimate(item, reference)?;
        Ok(RelevanceJudgment {
            item_id: item.clone(),
            estimated_rating,
            relevant: estimated_rating.is_some_and(|r| r >= POSITIVE_THRESHOLD),
            admitted_neighbors,
        })
    }
}

pub fn estimate_rating(
    item: &ItemId,
    reference: &[Interaction],
    store: &EmbeddingStore,
    quantiles: &QuantileIndex,
) -> Result<Option<f64>, RelevancyError> {
    Judge::new(store, quantiles).estimate(item, reference).map(|(r, _)| r)
}

pub fn judge(
    item: &ItemId,
    reference: &[Interaction],
    store: &EmbeddingStore,
    quantiles: &QuantileIndex,
) -> Result<RelevanceJudgment, RelevancyError> {
    Judge::new(store, quantiles).judge(item, reference)
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use super::*;
    use proptest::prelude::*;

    /// Items on the unit circle at the given angles (radians).
    fn circle(angles: &[(&str, f64)]) -> EmbeddingStore {
        let vecs = angles.iter().map(|(id, a)| (ItemId::from(*id), vec![a.cos(), a.sin()])).collect();
        EmbeddingStore::from_vectors(2, None, vecs).unwrap()
    }

    fn flat_thresholds(store: &EmbeddingStore, eps: f64) -> QuantileIndex {
        QuantileIndex::from_thresholds(0.99, store.ids().iter().map(|id| (id.clone(), eps)).collect())
    }

    #[test]
    fn single_neighbour_returns_its_rating() {
        let s = circle(&[("x", 0.0), ("a", 0.1)]);
        let q = flat_thresholds(&s, 0.5);
        let refs = [Interaction::new("u", "a", 4.0)];
        assert_eq!(estimate_rating(&"x".into(), &refs, &s, &q).unwrap(), Some(4.0));
    }

    #[test]
    fn two_neighbours_weighted() {
        // cos(acos 0.9) = 0.9, cos(acos 0.8) = 0.8
        let s = circle(&[("x", 0.0), ("a", 0.9f64.acos()), ("b", -(0.8f64.acos()))]);
        let q = flat_thresholds(&s, 0.5);
        let refs = [Interaction::new("u", "a", 5.0), Interaction::new("u", "b", 2.0)];
        let r = estimate_rating(&"x".into(), &refs, &s, &q).unwrap().unwrap();
        assert!((r - (0.9 * 5.0 + 0.8 * 2.0) / 1.7).abs() < 1e-12);
        assert!((r - 3.588).abs() < 1e-3);
    }

    #[test]
    fn nothing_admitted_is_absent_and_irrelevant() {
        let s = circle(&[("x", 0.0), ("a", 1.5)]);
        let q = flat_thresholds(&s, 0.9);
        let j = judge(&"x".into(), &[Interaction::new("u", "a", 5.0)], &s, &q).unwrap();
        assert_eq!((j.estimated_rating, j.relevant, j.admitted_neighbors), (None, false, 0));
    }

    #[test]
    fn negative_similarity_never_admitted() {
        let s = circle(&[("x", 0.0), ("a", 3.0)]);
        let q = flat_thresholds(&s, -1.0);
        assert_eq!(estimate_rating(&"x".into(), &[Interaction::new("u", "a", 5.0)], &s, &q).unwrap(), None);
    }

    #[test]
    fn boundary_is_inclusive() {
        let s = circle(&[("x", 0.0), ("a", 0.0), ("b", 0.0)]);
        let q = flat_thresholds(&s, 0.5);
        let three = judge(&"x".into(), &[Interaction::new("u", "a", 3.0)], &s, &q).unwrap();
        assert!(three.relevant);
        let below = judge(&"x".into(), &[Interaction::new("u", "a", 2.999)], &s, &q).unwrap();
        assert!(!below.relevant);
    }

    #[test]
    fn missing_data_is_an_error() {
        let s = circle(&[("x", 0.0), ("a", 0.1)]);
        let q = flat_thresholds(&s, 0.5);
        assert_eq!(
            estimate_rating(&"zz".into(), &[], &s, &q),
            Err(RelevancyError::MissingEmbedding("zz".into()))
        );
        let partial = QuantileIndex::from_thresholds(0.99, HashMap::new());
        assert_eq!(
            estimate_rating(&"x".into(), &[Interaction::new("u", "a", 1.0)], &s, &partial),
            Err(RelevancyError::MissingThreshold("a".into()))
        );
    }

    fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>, f64)> {
        (1usize..12).prop_flat_map(|n| {
            (
                proptest::collection::vec(-3.2f64..3.2, n),
                proptest::collection::vec(-0.5f64..1.0, n),
                proptest::collection::vec((2u32..=10).prop_map(|h| h as f64 / 2.0), n),
                -3.2f64..3.2,
            )
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(500))]

        #[test]
        fn matches_direct_summation((angles, eps, ratings, x) in instance()) {
            let mut pts: Vec<(String, f64)> = vec![("x".into(), x)];
            pts.extend(angles.iter().enumerate().map(|(j, a)| (format!("r{j}"), *a)));
            let vecs = pts.iter().map(|(id, a)| (ItemId::from(id.as_str()), vec![a.cos(), a.sin()])).collect();
            let store = EmbeddingStore::from_vectors(2, None, vecs).unwrap();
            let mut th: HashMap<ItemId, f64> = HashMap::new();
            th.insert("x".into(), 0.0);
            for (j, e) in eps.iter().enumerate() {
                th.insert(ItemId::new(format!("r{j}")), *e);
            }
            let q = QuantileIndex::from_thresholds(0.5, th);
            let refs: Vec<Interaction> = ratings.iter().enumerate().map(|(j, r)| Interaction::new("u", format!("r{j}"), *r)).collect();

            // oracle: cosine from angle differences, explicit loops
            let (mut num, mut den, mut n) = (0.0, 0.0, 0usize);
            for j in 0..angles.len() {
                let sim = (x - angles[j]).cos();
                if sim >= eps[j] && sim > 0.0 {
                    num += ratings[j] * sim;
                    den += sim;
                    n += 1;
                }
            }
            let j = judge(&"x".into(), &refs, &store, &q).unwrap();
            prop_assert_eq!(j.admitted_neighbors, n);
            match j.estimated_rating {
                None => prop_assert_eq!(n, 0),
                Some(r) => {
                    prop_assert!((r - num / den).abs() < 1e-9);
                    let lo = ratings.iter().cloned().fold(f64::INFINITY, f64::min);
                    let hi = ratings.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    prop_assert!(r >= lo - 1e-9 && r <= hi + 1e-9);
                }
            }
            // shrinking the reference set never admits more
            let fewer = judge(&"x".into(), &refs[..refs.len() / 2], &store, &q).unwrap();
            prop_assert!(fewer.admitted_neighbors <= j.admitted_neighbors);
        }
    }
}
