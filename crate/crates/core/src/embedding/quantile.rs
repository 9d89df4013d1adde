use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EmbeddingError, EmbeddingStore};
use crate::exec::{map_range, Execution};
use crate::ids::ItemId;

/// Per-item similarity thresholds at quantile `q`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantileIndex {
    q: f64,
    thresholds: HashMap<ItemId, f64>,
}

/// 1-based rank of the order statistic taken as the `q`-quantile of `n`
/// ascending values: `floor(q·n) + 1`, clamped to `[1, n]`. With 100 values
/// and q = 0.99 this is the largest value, so exactly one neighbour clears
/// the threshold.
pub fn quantile_rank(q: f64, n: usize) -> usize {
    let r = (q * n as f64 + 1e-9).floor() as usize + 1;
    r.clamp(1, n)
}

impl QuantileIndex {
    pub fn from_thresholds(q: f64, thresholds: HashMap<ItemId, f64>) -> Self {
        Self { q, thresholds }
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn epsilon(&self, id: &ItemId) -> Option<f64> {
        self.thresholds.get(id).copied()
    }

    pub fn len(&self) -> usize {
        self.thresholds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thresholds.is_empty()
    }

    pub fn thresholds(&self) -> &HashMap<ItemId, f64> {
        &self.thresholds
    }
}

/// For every stored item, the `q`-quantile of its similarities to all other
/// items. Rows are computed independently and never materialized as a full
/// matrix; the result does not depend on `exec`.
pub fn build_quantile_index(store: &EmbeddingStore, q: f64, exec: Execution) -> Result<QuantileIndex, EmbeddingError> {
    if !(q > 0.0 && q < 1.0) {
        return Err(EmbeddingError::InvalidQuantile(q));
    }
    let n = store.len();
    if n < 2 {
        return Err(EmbeddingError::TooFewItems(n));
    }
    let rank = quantile_rank(q, n - 1);
    let eps = map_range(exec, n, |j| {
        let mut row: Vec<f64> = (0..n).filter(|&i| i != j).map(|i| store.sim_idx(j, i)).collect();
        let (_, nth, _) = row.select_nth_unstable_by(rank - 1, f64::total_cmp);
        *nth
    });
    let thresholds = store.ids().iter().cloned().zip(eps).collect();
    Ok(QuantileIndex { q, thresholds })
}

#[derive(Serialize, Deserialize)]
struct ThresholdLine {
    item_id: ItemId,
    q: f64,
    epsilon: f64,
}

fn cache_err(path: &Path, message: impl ToString) -> EmbeddingError {
    EmbeddingError::Cache {
        path: path.display().to_string(),
        message: message.to_string(),
    }
}

pub fn write_threshold_cache(path: &Path, index: &QuantileIndex) -> Result<(), EmbeddingError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| cache_err(path, e))?;
    }
    let mut ids: Vec<&ItemId> = index.thresholds.keys().collect();
    ids.sort();
    let mut w = BufWriter::new(fs::File::create(path).map_err(|e| cache_err(path, e))?);
    for id in ids {
        let line = ThresholdLine {
            item_id: id.clone(),
            q: index.q,
            epsilon: index.thresholds[id],
        };
        serde_json::to_writer(&mut w, &line).map_err(|e| cache_err(path, e))?;
        w.write_all(b"\n").map_err(|e| cache_err(path, e))?;
    }
    w.flush().map_err(|e| cache_err(path, e))
}

/// Reads a threshold cache; every line must carry the same `q`.
pub fn read_threshold_cache(path: &Path) -> Result<QuantileIndex, EmbeddingError> {
    let file = fs::File::open(path).map_err(|e| cache_err(path, e))?;
    let mut q = None;
    let mut thresholds = HashMap::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| cache_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let t: ThresholdLine =
            serde_json::from_str(&line).map_err(|e| cache_err(path, format!("line {}: {e}", n + 1)))?;
        match q {
            None => q = Some(t.q),
            Some(q0) if q0 != t.q => return Err(cache_err(path, format!("line {}: mixed quantiles", n + 1))),
            _ => {}
        }
        thresholds.insert(t.item_id, t.epsilon);
    }
    let q = q.ok_or_else(|| cache_err(path, "empty threshold cache"))?;
    Ok(QuantileIndex { q, thresholds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::cosine_sim;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn random_store(n: usize, dim: usize, seed: u64) -> EmbeddingStore {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let vecs = (0..n)
            .map(|i| {
                let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                (ItemId::new(format!("i{i:04}")), v)
            })
            .collect();
        EmbeddingStore::from_vectors(dim, None, vecs).unwrap()
    }

    /// Sort every row with a full sort and pick by 1-based rank.
    fn oracle(store: &EmbeddingStore, q: f64) -> HashMap<ItemId, f64> {
        let ids = store.ids();
        let n = ids.len();
        let rank = ((q * (n - 1) as f64 + 1e-9).floor() as usize + 1).min(n - 1);
        ids.iter()
            .map(|a| {
                let mut row: Vec<f64> = ids
                    .iter()
                    .filter(|b| *b != a)
                    .map(|b| cosine_sim(store.vector(a).unwrap(), store.vector(b).unwrap()).unwrap())
                    .collect();
                row.sort_by(|x, y| x.partial_cmp(y).unwrap());
                (a.clone(), row[rank - 1])
            })
            .collect()
    }

    #[test]
    fn top_one_percent_of_a_hundred_neighbours() {
        let store = random_store(101, 12, 7);
        let idx = build_quantile_index(&store, 0.99, Execution::Sequential).unwrap();
        for (j, id) in store.ids().iter().enumerate() {
            let eps = idx.epsilon(id).unwrap();
            let admitted = (0..store.len()).filter(|&i| i != j && store.sim_idx(j, i) >= eps).count();
            assert_eq!(admitted, 1, "item {id}");
        }
    }

    #[test]
    fn identical_vectors_admit_everything() {
        let vecs = (0..5).map(|i| (ItemId::new(format!("{i}")), vec![0.3, 0.4])).collect();
        let store = EmbeddingStore::from_vectors(2, None, vecs).unwrap();
        let idx = build_quantile_index(&store, 0.99, Execution::Sequential).unwrap();
        for id in store.ids() {
            assert!((idx.epsilon(id).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn median_of_equidistant_triangle() {
        // three unit vectors 120° apart: every pairwise cosine is -1/2
        let s3 = 3f64.sqrt() / 2.0;
        let vecs = vec![
            ("a".into(), vec![1.0, 0.0]),
            ("b".into(), vec![-0.5, s3]),
            ("c".into(), vec![-0.5, -s3]),
        ];
        let store = EmbeddingStore::from_vectors(2, None, vecs).unwrap();
        let idx = build_quantile_index(&store, 0.5, Execution::Sequential).unwrap();
        for id in store.ids() {
            assert!((idx.epsilon(id).unwrap() + 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let store = random_store(1, 4, 1);
        assert!(matches!(
            build_quantile_index(&store, 0.9, Execution::Sequential),
            Err(EmbeddingError::TooFewItems(1))
        ));
        let store = random_store(3, 4, 1);
        assert!(build_quantile_index(&store, 1.0, Execution::Sequential).is_err());
        assert!(build_quantile_index(&store, 0.0, Execution::Sequential).is_err());
    }

    #[test]
    fn parallel_matches_sequential() {
        let store = random_store(150, 8, 3);
        let a = build_quantile_index(&store, 0.95, Execution::Sequential).unwrap();
        let b = build_quantile_index(&store, 0.95, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn cache_round_trip() {
        let store = random_store(20, 4, 9);
        let idx = build_quantile_index(&store, 0.9, Execution::Sequential).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("thr.jsonl");
        write_threshold_cache(&path, &idx).unwrap();
        assert_eq!(read_threshold_cache(&path).unwrap(), idx);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn matches_sort_and_pick(n in 2usize..60, q in 0.01f64..0.99, seed in any::<u64>()) {
            let store = random_store(n, 6, seed);
            let idx = build_quantile_index(&store, q, Execution::Sequential).unwrap();
            let want = oracle(&store, q);
            for id in store.ids() {
                prop_assert!((idx.epsilon(id).unwrap() - want[id]).abs() < 1e-12);
            }
        }

        #[test]
        fn monotone_in_q(seed in any::<u64>(), q1 in 0.01f64..0.98, dq in 0.0f64..0.5) {
            let q2 = (q1 + dq).min(0.99);
            let store = random_store(40, 5, seed);
            let a = build_quantile_index(&store, q1, Execution::Sequential).unwrap();
            let b = build_quantile_index(&store, q2, Execution::Sequential).unwrap();
            for id in store.ids() {
                prop_assert!(a.epsilon(id).unwrap() <= b.epsilon(id).unwrap());
            }
        }
    }
}
