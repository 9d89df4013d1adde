//! Non-negative matrix factorization trained with plain per-rating SGD.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::BaselineError;
use crate::corpus::Interaction;
use crate::embedding::{EmbeddingStore, QuantileIndex};
use crate::{ItemId, UserId};

pub const RATING_SCALE: (f64, f64) = (1.0, 5.0);

/// Base step size; `alpha` multiplies it.
const BASE_RATE: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NmfConfig {
    pub d: usize,
    pub lambda: f64,
    pub alpha: f64,
    pub updates: usize,
    pub validation_fraction: f64,
    /// Validation RMSE is measured every this many updates (and at the end).
    pub eval_every: usize,
    pub seed: u64,
}

impl Default for NmfConfig {
    fn default() -> Self {
        Self {
            d: 50,
            lambda: 0.05,
            alpha: 1.2,
            updates: 15_000,
            validation_fraction: 0.1,
            eval_every: 250,
            seed: 22222,
        }
    }
}

impl NmfConfig {
    /// Step size for update `t` (0-based).
    pub fn learning_rate(&self, t: usize) -> f64 {
        self.alpha * BASE_RATE / (1.0 + t as f64 / 1000.0).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub update: usize,
    pub validation_rmse: f64,
    /// Best validation RMSE seen up to and including this checkpoint.
    pub best_rmse: f64,
    pub min_factor: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NmfHeader {
    pub d: usize,
    pub lambda: f64,
    pub alpha: f64,
    pub seed: u64,
    pub updates: usize,
    /// Update count at which the restored parameters were captured.
    pub best_update: usize,
    pub best_validation_rmse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NmfModel {
    pub header: NmfHeader,
    pub user_ids: Vec<UserId>,
    pub item_ids: Vec<ItemId>,
    /// Row-major |U|×d.
    pub user_factors: Vec<f64>,
    /// Row-major |I|×d.
    pub item_factors: Vec<f64>,
    #[serde(skip)]
    pub history: Vec<Checkpoint>,
    #[serde(skip)]
    user_index: HashMap<UserId, usize>,
    #[serde(skip)]
    item_index: HashMap<ItemId, usize>,
}

impl NmfModel {
    fn reindex(&mut self) {
        self.user_index = self.user_ids.iter().cloned().enumerate().map(|(i, u)| (u, i)).collect();
        self.item_index = self.item_ids.iter().cloned().enumerate().map(|(i, v)| (v, i)).collect();
    }

    pub fn d(&self) -> usize {
        self.header.d
    }

    pub fn user_row(&self, user: &UserId) -> Option<&[f64]> {
        let d = self.d();
        self.user_index.get(user).map(|&i| &self.user_factors[i * d..(i + 1) * d])
    }

    pub fn item_row(&self, item: &ItemId) -> Option<&[f64]> {
        let d = self.d();
        self.item_index.get(item).map(|&i| &self.item_factors[i * d..(i + 1) * d])
    }

    fn item_row_at(&self, i: usize) -> &[f64] {
        let d = self.d();
        &self.item_factors[i * d..(i + 1) * d]
    }

    /// Clipped rating prediction; `None` for unknown users or items.
    pub fn predict(&self, user: &UserId, item: &ItemId) -> Option<f64> {
        let u = self.user_row(user)?;
        let v = self.item_row(item)?;
        Some(clip(dot(u, v)))
    }

    /// Root mean squared error of clipped predictions over known pairs.
    pub fn rmse(&self, ratings: &[Interaction]) -> Option<f64> {
        let errs: Vec<f64> = ratings
            .iter()
            .filter_map(|r| self.predict(&r.user_id, &r.item_id).map(|p| (p - r.rating).powi(2)))
            .collect();
        (!errs.is_empty()).then(|| (errs.iter().sum::<f64>() / errs.len() as f64).sqrt())
    }

    pub fn min_factor(&self) -> f64 {
        self.user_factors
            .iter()
            .chain(&self.item_factors)
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Raw (unclipped) affinity of `user` for every item, in `item_ids` order.
    pub fn affinities(&self, user: &UserId) -> Option<Vec<f64>> {
        let u = self.user_row(user)?;
        Some((0..self.item_ids.len()).map(|i| dot(u, self.item_row_at(i))).collect())
    }

    /// Item factors as a cosine-similarity store. Rows that collapsed to zero
    /// get the uniform direction so every trained item stays addressable.
    pub fn learned_item_store(&self) -> Result<EmbeddingStore, BaselineError> {
        let d = self.d();
        let vectors = self
            .item_ids
            .iter()
            .enumerate()
            .map(|(i, id)| {
                let row = self.item_row_at(i);
                let v = if row.iter().all(|&x| x == 0.0) {
                    vec![1.0; d]
                } else {
                    row.to_vec()
                };
                (id.clone(), v)
            })
            .collect();
        Ok(EmbeddingStore::from_vectors(d, None, vectors)?)
    }

    /// Learned-factor store plus its quantile thresholds.
    pub fn learned_space(&self, q: f64, exec: crate::exec::Execution) -> Result<(EmbeddingStore, QuantileIndex), BaselineError> {
        let store = self.learned_item_store()?;
        let quantiles = crate::embedding::build_quantile_index(&store, q, exec)?;
        Ok((store, quantiles))
    }

    pub fn write_json(&self, path: &Path) -> Result<(), BaselineError> {
        let io = |e: std::io::Error| BaselineError::Checkpoint {
            path: path.display().to_string(),
            message: e.to_string(),
        };
        let text = serde_json::to_string(self).map_err(|e| BaselineError::Checkpoint {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, text).map_err(io)?;
        fs::rename(&tmp, path).map_err(io)
    }

    pub fn read_json(path: &Path) -> Result<Self, BaselineError> {
        let err = |message: String| BaselineError::Checkpoint {
            path: path.display().to_string(),
            message,
        };
        let text = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let mut model: NmfModel = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
        let d = model.header.d;
        if model.user_factors.len() != model.user_ids.len() * d || model.item_factors.len() != model.item_ids.len() * d {
            return Err(err("factor matrix size does not match header".into()));
        }
        model.reindex();
        Ok(model)
    }
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

fn clip(x: f64) -> f64 {
    x.clamp(RATING_SCALE.0, RATING_SCALE.1)
}

/// Splits `ratings` into (train, validation) with a seeded shuffle. Both
/// parts are non-empty when there are at least two ratings.
pub fn holdout(ratings: &[Interaction], fraction: f64, seed: u64) -> (Vec<Interaction>, Vec<Interaction>) {
    let mut shuffled = ratings.to_vec();
    shuffled.sort_by(|a, b| (&a.user_id, &a.item_id).cmp(&(&b.user_id, &b.item_id)));
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = ((ratings.len() as f64 * fraction).round() as usize).clamp(1, ratings.len().saturating_sub(1).max(1));
    let validation = shuffled.split_off(shuffled.len() - n_val);
    (shuffled, validation)
}

/// Trains on `ratings` with an internal validation holdout.
pub fn nmf_train(ratings: &[Interaction], config: &NmfConfig) -> Result<NmfModel, BaselineError> {
    if ratings.len() < 2 {
        return Err(BaselineError::Config("NMF needs at least two ratings".into()));
    }
    if !(config.validation_fraction > 0.0 && config.validation_fraction < 1.0) {
        return Err(BaselineError::Config(format!(
            "validation_fraction must be in (0, 1), got {}",
            config.validation_fraction
        )));
    }
    let (train, validation) = holdout(ratings, config.validation_fraction, config.seed);
    let users: BTreeSet<&UserId> = ratings.iter().map(|r| &r.user_id).collect();
    let items: BTreeSet<&ItemId> = ratings.iter().map(|r| &r.item_id).collect();
    nmf_fit(
        &train,
        &validation,
        users.into_iter().cloned().collect(),
        items.into_iter().cloned().collect(),
        config,
    )
}

/// SGD with an explicit train / validation pair. Every user and item in
/// either set must appear in `user_ids` / `item_ids`.
pub fn nmf_fit(
    train: &[Interaction],
    validation: &[Interaction],
    user_ids: Vec<UserId>,
    item_ids: Vec<ItemId>,
    config: &NmfConfig,
) -> Result<NmfModel, BaselineError> {
    if config.d == 0 {
        return Err(BaselineError::Config("factor count d must be positive".into()));
    }
    if train.is_empty() || validation.is_empty() {
        return Err(BaselineError::Config("training and validation sets must be non-empty".into()));
    }
    if !(config.lambda >= 0.0 && config.alpha > 0.0) {
        return Err(BaselineError::Config("lambda must be ≥ 0 and alpha > 0".into()));
    }
    let d = config.d;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mean = train.iter().map(|r| r.rating).sum::<f64>() / train.len() as f64;
    // factors start around sqrt(mean / d) so initial predictions sit near the mean
    let scale = (mean.max(0.0) / d as f64).sqrt();
    let mut init = |n: usize| -> Vec<f64> { (0..n * d).map(|_| scale * rng.random_range(0.5..1.5)).collect() };
    let mut model = NmfModel {
        header: NmfHeader {
            d,
            lambda: config.lambda,
            alpha: config.alpha,
            seed: config.seed,
            updates: config.updates,
            best_update: 0,
            best_validation_rmse: f64::INFINITY,
        },
        user_factors: init(user_ids.len()),
        item_factors: init(item_ids.len()),
        user_ids,
        item_ids,
        history: Vec::new(),
        user_index: HashMap::new(),
        item_index: HashMap::new(),
    };
    model.reindex();
    let index_of = |r: &Interaction, m: &NmfModel| -> Result<(usize, usize), BaselineError> {
        let u = *m
            .user_index
            .get(&r.user_id)
            .ok_or_else(|| BaselineError::UnknownUser(r.user_id.clone()))?;
        let i = *m
            .item_index
            .get(&r.item_id)
            .ok_or_else(|| BaselineError::Config(format!("item {} has no factor row", r.item_id)))?;
        Ok((u, i))
    };
    let train_idx: Vec<(usize, usize, f64)> = train
        .iter()
        .map(|r| index_of(r, &model).map(|(u, i)| (u, i, r.rating)))
        .collect::<Result<_, _>>()?;
    for r in validation {
        index_of(r, &model)?;
    }

    let mut best = (model.user_factors.clone(), model.item_factors.clone());
    let mut best_rmse = f64::INFINITY;
    let mut best_update = 0;
    let mut order: Vec<usize> = (0..train_idx.len()).collect();
    let mut cursor = order.len();
    let mut checkpoint = |model: &mut NmfModel, update: usize| -> Result<(), BaselineError> {
        let rmse = model.rmse(validation).unwrap_or(f64::INFINITY);
        if !rmse.is_finite() {
            return Err(BaselineError::Divergence { update });
        }
        if rmse < best_rmse {
            best_rmse = rmse;
            best_update = update;
            best = (model.user_factors.clone(), model.item_factors.clone());
        }
        let min_factor = model.min_factor();
        model.history.push(Checkpoint {
            update,
            validation_rmse: rmse,
            best_rmse,
            min_factor,
        });
        Ok(())
    };
    checkpoint(&mut model, 0)?;

    for t in 0..config.updates {
        if cursor == order.len() {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let (u, i, r) = train_idx[order[cursor]];
        cursor += 1;
        let lr = config.learning_rate(t);
        let (uf, vf) = (&mut model.user_factors[u * d..(u + 1) * d], &mut model.item_factors[i * d..(i + 1) * d]);
        let err = r - dot(uf, vf);
        if !err.is_finite() {
            return Err(BaselineError::Divergence { update: t + 1 });
        }
        for k in 0..d {
            let (pu, qi) = (uf[k], vf[k]);
            uf[k] = (pu + lr * (err * qi - config.lambda * pu)).max(0.0);
            vf[k] = (qi + lr * (err * pu - config.lambda * qi)).max(0.0);
            if !uf[k].is_finite() || !vf[k].is_finite() {
                return Err(BaselineError::Divergence { update: t + 1 });
            }
        }
        let done = t + 1;
        if done % config.eval_every.max(1) == 0 || done == config.updates {
            checkpoint(&mut model, done)?;
        }
    }

    model.user_factors = best.0;
    model.item_factors = best.1;
    model.header.best_update = best_update;
    model.header.best_validation_rmse = best_rmse;
    Ok(model)
}
