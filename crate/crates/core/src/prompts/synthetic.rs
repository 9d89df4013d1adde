use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{PromptError, PromptStyle};
use crate::corpus::Catalog;
use crate::embedding::{nearest_items, EmbeddingStore};
use crate::ids::ItemId;

/// Fraction of sampled demonstration items marked as liked.
pub const SYNTHETIC_LIKED_SHARE: f64 = 0.7;

/// A fabricated user history with recommendations, shown as a worked
/// example in one-shot and chain-of-thought prompts.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticExample {
    pub liked: Vec<(ItemId, String)>,
    pub disliked: Vec<(ItemId, String)>,
    pub recommendations: Vec<(ItemId, String)>,
    /// `step i: ...` lines; empty for one-shot.
    pub reasoning: Vec<String>,
}

/// The `k` items nearest the mean of the liked vectors, skipping `exclude`.
pub fn demonstration_recommendations(
    store: &EmbeddingStore,
    liked: &[ItemId],
    k: usize,
    exclude: &HashSet<ItemId>,
) -> Vec<ItemId> {
    let mut mean = vec![0.0; store.dim()];
    for id in liked {
        if let Some(v) = store.vector(id) {
            mean.iter_mut().zip(v).for_each(|(m, x)| *m += x);
        }
    }
    nearest_items(store, &mean, k, exclude).unwrap_or_default()
}

fn collective_score(store: &EmbeddingStore, c: &ItemId, liked: &[ItemId], disliked: &[ItemId]) -> f64 {
    let s = |a: &ItemId| store.similarity(c, a).unwrap_or(0.0);
    liked.iter().map(s).sum::<f64>() - disliked.iter().map(s).sum::<f64>()
}

/// Samples `example_count` catalog items (none from `exclude`, none released
/// after `release_cutoff` among the recommendations) and builds a
/// demonstration of `k` recommendations. Deterministic in `seed`.
#[allow(clippy::too_many_arguments)]
pub fn build_synthetic_example(
    catalog: &Catalog,
    store: &EmbeddingStore,
    example_count: usize,
    k: usize,
    seed: u64,
    style: PromptStyle,
    exclude: &HashSet<ItemId>,
    release_cutoff: Option<i32>,
) -> Result<SyntheticExample, PromptError> {
    if style == PromptStyle::Zero {
        return Err(PromptError::NoDemonstrationForZeroShot);
    }
    let pool: Vec<&ItemId> = catalog
        .items()
        .iter()
        .map(|i| &i.item_id)
        .filter(|id| store.contains(id) && !exclude.contains(*id))
        .collect();
    let needed = example_count + k;
    if example_count == 0 || pool.len() < needed {
        return Err(PromptError::CatalogTooSmall {
            available: pool.len(),
            needed,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked: Vec<ItemId> = rand::seq::index::sample(&mut rng, pool.len(), example_count)
        .into_iter()
        .map(|i| pool[i].clone())
        .collect();
    let mut n_liked = ((example_count as f64) * SYNTHETIC_LIKED_SHARE).round() as usize;
    n_liked = n_liked.clamp(1, example_count);
    if example_count >= 2 && n_liked == example_count {
        n_liked -= 1;
    }
    let (liked, disliked) = picked.split_at(n_liked);

    let mut skip: HashSet<ItemId> = exclude.clone();
    skip.extend(picked.iter().cloned());
    if let Some(cut) = release_cutoff {
        skip.extend(catalog.items().iter().filter(|i| i.release_year > cut).map(|i| i.item_id.clone()));
    }
    let mut recs = demonstration_recommendations(store, liked, k, &skip);
    if recs.len() < k {
        return Err(PromptError::CatalogTooSmall {
            available: recs.len(),
            needed: k,
        });
    }

    let title = |id: &ItemId| catalog.title_of(id).unwrap_or(id.as_str()).to_string();
    let mut reasoning = Vec::new();
    if style == PromptStyle::Cot {
        let mut scored: Vec<(f64, ItemId)> =
            recs.iter().map(|c| (collective_score(store, c, liked, disliked), c.clone())).collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
        recs = scored.iter().map(|(_, id)| id.clone()).collect();
        let mut step = 0;
        let mut push = |line: String| {
            step += 1;
            reasoning.push(format!("step {step}: {line}"));
        };
        for id in liked {
            push(format!("The user liked {}, so movies similar to it should rank higher.", title(id)));
        }
        for id in disliked {
            push(format!("The user disliked {}, so movies similar to it should rank lower.", title(id)));
        }
        let ranking = scored
            .iter()
            .map(|(s, id)| format!("{} ({s:.2})", title(id)))
            .collect::<Vec<_>>()
            .join(", ");
        push(format!(
            "Sorting candidates by total similarity to the liked movies minus the disliked movies gives: {ranking}."
        ));
    }
    let with_titles = |ids: &[ItemId]| ids.iter().map(|id| (id.clone(), title(id))).collect::<Vec<_>>();
    Ok(SyntheticExample {
        liked: with_titles(liked),
        disliked: with_titles(disliked),
        recommendations: with_titles(&recs),
        reasoning,
    })
}
