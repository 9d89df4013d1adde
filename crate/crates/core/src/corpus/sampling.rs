use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{group_by_user, CorpusError, Interaction, UserSplit};
use crate::hashing::derive_seed;
use crate::ids::UserId;

/// A set size given either as a count or as a fraction of the profile.
///
/// On the wire this is a bare number: values below 1 are fractions, anything
/// else must be a whole count.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub enum SplitSize {
    Count(usize),
    Fraction(f64),
}

impl SplitSize {
    /// Resolves against a profile of `total` interactions (fractions round
    /// half away from zero).
    pub fn resolve(self, total: usize) -> usize {
        match self {
            SplitSize::Count(n) => n,
            SplitSize::Fraction(f) => (f * total as f64).round() as usize,
        }
    }
}

impl TryFrom<f64> for SplitSize {
    type Error = String;

    fn try_from(v: f64) -> Result<Self, Self::Error> {
        if !v.is_finite() || v < 0.0 {
            Err(format!("size must be a non-negative number, got {v}"))
        } else if v < 1.0 {
            Ok(SplitSize::Fraction(v))
        } else if v.fract() == 0.0 {
            Ok(SplitSize::Count(v as usize))
        } else {
            Err(format!("size {v} is neither a fraction below 1 nor a whole count"))
        }
    }
}

impl From<SplitSize> for f64 {
    fn from(s: SplitSize) -> f64 {
        match s {
            SplitSize::Count(n) => n as f64,
            SplitSize::Fraction(f) => f,
        }
    }
}

/// Eligibility rules for [`sample_users`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserSampling {
    pub n: usize,
    pub lo_pct: f64,
    pub hi_pct: f64,
    pub min_total: usize,
    pub min_dislikes: usize,
}

impl Default for UserSampling {
    fn default() -> Self {
        Self {
            n: 50,
            lo_pct: 50.0,
            hi_pct: 75.0,
            min_total: 122,
            min_dislikes: 30,
        }
    }
}

/// Nearest-rank percentile of an ascending slice.
fn percentile(sorted: &[usize], pct: f64) -> usize {
    let rank = ((pct / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Picks `rules.n` distinct users whose interaction count lies inside the
/// `[lo_pct, hi_pct]` percentile band of all users' counts and who meet the
/// total / dislike minimums. Returned ids are sorted.
pub fn sample_users(
    interactions: &[Interaction],
    rules: &UserSampling,
    seed: u64,
) -> Result<Vec<UserId>, CorpusError> {
    if !(0.0 <= rules.lo_pct && rules.lo_pct < rules.hi_pct && rules.hi_pct <= 100.0) {
        return Err(CorpusError::InvalidBand {
            lo: rules.lo_pct,
            hi: rules.hi_pct,
        });
    }
    let profiles = group_by_user(interactions);
    if profiles.is_empty() {
        return Err(CorpusError::NotEnoughUsers {
            eligible: 0,
            requested: rules.n,
        });
    }
    let mut totals: Vec<usize> = profiles.values().map(Vec::len).collect();
    totals.sort_unstable();
    let lo = percentile(&totals, rules.lo_pct);
    let hi = percentile(&totals, rules.hi_pct);

    let mut eligible: Vec<UserId> = profiles
        .iter()
        .filter(|(_, p)| {
            let dislikes = p.iter().filter(|i| !i.is_positive()).count();
            (lo..=hi).contains(&p.len()) && p.len() >= rules.min_total && dislikes >= rules.min_dislikes
        })
        .map(|(u, _)| u.clone())
        .collect();
    if eligible.len() < rules.n {
        return Err(CorpusError::NotEnoughUsers {
            eligible: eligible.len(),
            requested: rules.n,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    eligible.shuffle(&mut rng);
    eligible.truncate(rules.n);
    eligible.sort();
    Ok(eligible)
}

/// Integer allocation of `total` across `sizes` proportional to
/// `sizes[s] * total / sum(sizes)`, each entry within one of its exact share
/// (largest remainder; ties go to the earlier set).
fn largest_remainder(sizes: &[usize], total: usize) -> Vec<usize> {
    let exact = exact_shares(sizes, total);
    let mut alloc: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut left = total - alloc.iter().sum::<usize>();
    for &s in order.iter().cycle() {
        if left == 0 {
            break;
        }
        if alloc[s] < sizes[s] {
            alloc[s] += 1;
            left -= 1;
        }
    }
    alloc
}

fn exact_shares(sizes: &[usize], total: usize) -> Vec<f64> {
    let grand: usize = sizes.iter().sum();
    sizes.iter().map(|&n| n as f64 * total as f64 / grand as f64).collect()
}

/// Gives every set at least one item of this polarity when a donor can
/// spare one without leaving its own exact share by a full item.
fn ensure_one_each(alloc: &mut [usize], sizes: &[usize], total: usize) {
    let exact = exact_shares(sizes, total);
    for s in 0..sizes.len() {
        if alloc[s] > 0 || sizes[s] < 2 || exact[s] <= 0.0 {
            continue;
        }
        let donor = (0..sizes.len())
            .filter(|&t| t != s && alloc[t] >= 2 && alloc[t] as f64 > exact[t])
            .max_by(|&a, &b| (alloc[a] as f64 - exact[a]).total_cmp(&(alloc[b] as f64 - exact[b])));
        if let Some(t) = donor {
            alloc[t] -= 1;
            alloc[s] += 1;
        }
    }
}

/// Stratified three-way split of one user's profile.
///
/// `example_size` and `eval_size` fix |E| and |T|; F gets the remainder.
/// Positives are distributed over the three sets by largest remainder so
/// every set's positive count is within one item of its proportional share,
/// then items are dealt out in a seeded shuffle.
pub fn split_user(
    interactions_u: &[Interaction],
    example_size: SplitSize,
    eval_size: SplitSize,
    seed: u64,
) -> Result<UserSplit, CorpusError> {
    let user_id = interactions_u
        .first()
        .map(|i| i.user_id.clone())
        .unwrap_or_else(|| UserId::new(""));
    let mut seen = HashSet::new();
    for i in interactions_u {
        if !seen.insert(&i.item_id) {
            return Err(CorpusError::DuplicateInteraction {
                user: user_id,
                item: i.item_id.clone(),
            });
        }
    }
    let mut positives: Vec<&Interaction> = interactions_u.iter().filter(|i| i.is_positive()).collect();
    let mut negatives: Vec<&Interaction> = interactions_u.iter().filter(|i| !i.is_positive()).collect();
    if positives.len() < 2 || negatives.len() < 2 {
        return Err(CorpusError::ProfileTooSmall {
            user: user_id,
            positives: positives.len(),
            negatives: negatives.len(),
        });
    }
    let total = interactions_u.len();
    let n_e = example_size.resolve(total);
    let n_t = eval_size.resolve(total);
    if n_e == 0 || n_t == 0 || n_e + n_t > total {
        return Err(CorpusError::SplitSizes {
            user: user_id,
            example: n_e,
            evaluation: n_t,
            total,
        });
    }
    let sizes = [n_e, n_t, total - n_e - n_t];
    let mut pos_alloc = largest_remainder(&sizes, positives.len());
    ensure_one_each(&mut pos_alloc, &sizes, positives.len());
    let mut neg_alloc: Vec<usize> = sizes.iter().zip(&pos_alloc).map(|(n, p)| n - p).collect();
    ensure_one_each(&mut neg_alloc, &sizes, negatives.len());
    for s in 0..3 {
        pos_alloc[s] = sizes[s] - neg_alloc[s];
    }

    positives.sort_by(|a, b| a.item_id.cmp(&b.item_id));
    negatives.sort_by(|a, b| a.item_id.cmp(&b.item_id));
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[user_id.as_str()]));
    positives.shuffle(&mut rng);
    negatives.shuffle(&mut rng);

    let mut sets: [Vec<Interaction>; 3] = Default::default();
    let (mut p, mut n) = (0, 0);
    for s in 0..3 {
        let take_pos = pos_alloc[s];
        let take_neg = neg_alloc[s];
        sets[s].extend(positives[p..p + take_pos].iter().map(|&i| i.clone()));
        sets[s].extend(negatives[n..n + take_neg].iter().map(|&i| i.clone()));
        p += take_pos;
        n += take_neg;
    }
    let [mut example_set, mut evaluation_set, mut feedback_set] = sets;
    // prompt order is shuffled so likes and dislikes interleave
    example_set.shuffle(&mut rng);
    evaluation_set.sort_by(|a, b| a.item_id.cmp(&b.item_id));
    feedback_set.sort_by(|a, b| a.item_id.cmp(&b.item_id));
    Ok(UserSplit {
        user_id,
        example_set,
        feedback_set,
        evaluation_set,
    })
}

/// Splits every listed user, skipping (with a warning) users whose profile
/// cannot be split.
pub fn split_users(
    interactions: &[Interaction],
    users: &[UserId],
    example_size: SplitSize,
    eval_size: SplitSize,
    seed: u64,
) -> Result<BTreeMap<UserId, UserSplit>, CorpusError> {
    let profiles = group_by_user(interactions);
    let mut out = BTreeMap::new();
    for user in users {
        let Some(profile) = profiles.get(user) else {
            tracing::warn!(%user, "user has no interactions; skipped");
            continue;
        };
        out.insert(user.clone(), split_user(profile, example_size, eval_size, seed)?);
    }
    Ok(out)
}
