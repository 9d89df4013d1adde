//! Synthetic clustered movie worlds for offline runs, tests and benches.
//!
//! Items belong to latent clusters; each cluster has its own vocabulary, so
//! hashed bag-of-words embeddings of the item text are clustered too. Every
//! summary also carries the same boilerplate sentence. Users have a
//! per-cluster affinity that drives both what they watch and how they rate.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::corpus::{Catalog, CorpusError, Interaction, Item, RATING_MAX, RATING_MIN};
use crate::ids::ItemId;

pub const BOILERPLATE: &str = "This film was released in theaters and received reviews from critics and \
audiences. The production features a cast of actors and a dedicated crew.";

const GENRES: &[&str] = &[
    "Action", "Adventure", "Animation", "Children", "Comedy", "Crime", "Documentary", "Drama", "Fantasy",
    "Film-Noir", "Horror", "Musical", "Mystery", "Romance", "Sci-Fi", "Thriller", "War", "Western",
];

const ONSETS: &[&str] = &["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "tr", "st", "ch"];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "eo"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_items: usize,
    pub n_clusters: usize,
    pub n_users: usize,
    pub vocab_per_cluster: usize,
    pub generic_vocab: usize,
    pub cluster_words_per_summary: usize,
    pub generic_words_per_summary: usize,
    pub min_ratings: usize,
    pub max_ratings: usize,
    /// Exponent of the Zipf-like item popularity curve.
    pub zipf_exponent: f64,
    /// How strongly cluster affinity steers what a user watches.
    pub watch_affinity: f64,
    /// Rating = base + slope·affinity + N(0, noise), rounded to half stars.
    pub rating_base: f64,
    pub rating_slope: f64,
    pub rating_noise: f64,
    pub first_year: i32,
    pub last_year: i32,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_items: 2000,
            n_clusters: 50,
            n_users: 200,
            vocab_per_cluster: 40,
            generic_vocab: 300,
            cluster_words_per_summary: 30,
            generic_words_per_summary: 8,
            min_ratings: 40,
            max_ratings: 80,
            zipf_exponent: 0.8,
            watch_affinity: 2.0,
            rating_base: 3.0,
            rating_slope: 0.9,
            rating_noise: 0.5,
            first_year: 1960,
            last_year: 2011,
            seed: 7,
        }
    }
}

pub struct SyntheticWorld {
    pub catalog: Catalog,
    pub interactions: Vec<Interaction>,
    pub cluster_of: HashMap<ItemId, usize>,
    /// Relative popularity weight used when sampling who watched what.
    pub popularity: HashMap<ItemId, f64>,
}

/// Distinct pseudo-words, drawn from syllables.
fn lexicon(rng: &mut ChaCha8Rng, n: usize, taken: &mut HashSet<String>) -> Vec<String> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let syllables = rng.random_range(2..=3);
        let w: String = (0..syllables)
            .map(|_| format!("{}{}", ONSETS[rng.random_range(0..ONSETS.len())], VOWELS[rng.random_range(0..VOWELS.len())]))
            .collect();
        if taken.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default()
}

/// Index drawn with probability proportional to `1 / (rank + 1)`.
fn zipf_pick(rng: &mut ChaCha8Rng, cumulative: &[f64]) -> usize {
    let total = *cumulative.last().expect("nonempty");
    let x = rng.random::<f64>() * total;
    cumulative.partition_point(|c| *c <= x).min(cumulative.len() - 1)
}

fn round_rating(x: f64) -> f64 {
    ((x * 2.0).round() / 2.0).clamp(RATING_MIN, RATING_MAX)
}

pub fn generate(cfg: &SynthConfig) -> SyntheticWorld {
    assert!(cfg.n_clusters > 0 && cfg.n_items >= cfg.n_clusters, "need at least one item per cluster");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut taken = HashSet::new();
    let cluster_vocab: Vec<Vec<String>> = (0..cfg.n_clusters)
        .map(|_| lexicon(&mut rng, cfg.vocab_per_cluster, &mut taken))
        .collect();
    let generic = lexicon(&mut rng, cfg.generic_vocab, &mut taken);
    let title_words = lexicon(&mut rng, (cfg.n_items as f64).sqrt().ceil() as usize * 2 + 8, &mut taken);
    let zipf_cum = |n: usize| -> Vec<f64> {
        (0..n)
            .scan(0.0, |acc, r| {
                *acc += 1.0 / (r + 1) as f64;
                Some(*acc)
            })
            .collect()
    };
    let vocab_cum = zipf_cum(cfg.vocab_per_cluster);

    let cluster_genres: Vec<Vec<String>> = (0..cfg.n_clusters)
        .map(|_| {
            let mut g: Vec<&str> = GENRES.choose_multiple(&mut rng, 2).copied().collect();
            g.sort();
            g.into_iter().map(String::from).collect()
        })
        .collect();

    let mut used_titles = HashSet::new();
    let mut items = Vec::with_capacity(cfg.n_items);
    let mut cluster_of = HashMap::new();
    let mut supplements = Vec::new();
    for i in 0..cfg.n_items {
        let id = ItemId::new(format!("{}", i + 1));
        let c = i % cfg.n_clusters;
        let base = loop {
            let a = &title_words[rng.random_range(0..title_words.len())];
            let b = &title_words[rng.random_range(0..title_words.len())];
            if a != b && used_titles.insert((a.clone(), b.clone())) {
                break format!("{} {}", capitalize(a), capitalize(b));
            }
        };
        let raw = if rng.random_bool(0.1) { format!("{base}, The") } else { base };
        let year = rng.random_range(cfg.first_year..=cfg.last_year);
        let mut item = Item::new(id.clone(), &raw, year, cluster_genres[c].clone());
        let mut words: Vec<&str> = (0..cfg.cluster_words_per_summary)
            .map(|_| cluster_vocab[c][zipf_pick(&mut rng, &vocab_cum)].as_str())
            .collect();
        words.extend((0..cfg.generic_words_per_summary).map(|_| generic[rng.random_range(0..generic.len())].as_str()));
        words.shuffle(&mut rng);
        let text = format!("{BOILERPLATE} {}.", capitalize(&words.join(" ")));
        item.supplement_text = Some(text.clone());
        supplements.push(text);
        cluster_of.insert(id, c);
        items.push(item);
    }

    let mut order: Vec<usize> = (0..cfg.n_items).collect();
    order.shuffle(&mut rng);
    let mut popularity = HashMap::new();
    let mut pop_vec = vec![0.0; cfg.n_items];
    for (rank, &i) in order.iter().enumerate() {
        let w = 1.0 / ((rank + 1) as f64).powf(cfg.zipf_exponent);
        pop_vec[i] = w;
        popularity.insert(items[i].item_id.clone(), w);
    }

    let affinity = Normal::new(0.0, 1.0).expect("valid normal");
    let noise = Normal::new(0.0, cfg.rating_noise.max(0.0)).expect("valid normal");
    let mut interactions = Vec::new();
    for u in 0..cfg.n_users {
        let user = format!("u{:04}", u + 1);
        let a: Vec<f64> = (0..cfg.n_clusters).map(|_| affinity.sample(&mut rng)).collect();
        let m = rng.random_range(cfg.min_ratings..=cfg.max_ratings).min(cfg.n_items);
        // weighted sampling without replacement via exponential keys
        let mut keyed: Vec<(f64, usize)> = (0..cfg.n_items)
            .map(|i| {
                let w = pop_vec[i] * (cfg.watch_affinity * a[i % cfg.n_clusters]).exp();
                let u01: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
                (u01.ln() / w, i)
            })
            .collect();
        keyed.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
        let mut chosen: Vec<usize> = keyed.into_iter().take(m).map(|(_, i)| i).collect();
        chosen.sort_unstable();
        for i in chosen {
            let r = round_rating(cfg.rating_base + cfg.rating_slope * a[i % cfg.n_clusters] + noise.sample(&mut rng));
            interactions.push(Interaction::new(user.as_str(), items[i].item_id.clone(), r));
        }
    }

    SyntheticWorld {
        catalog: Catalog::from_items(items).expect("generated ids are unique"),
        interactions,
        cluster_of,
        popularity,
    }
}

/// Paths of the files written by [`write_world`].
pub struct WorldFiles {
    pub ratings: PathBuf,
    pub items: PathBuf,
    pub supplement: PathBuf,
}

/// Writes `ratings.tsv`, `items.tsv` and `supplement.jsonl` under `dir`.
pub fn write_world(world: &SyntheticWorld, dir: &Path) -> Result<WorldFiles, CorpusError> {
    let io = |path: &Path| {
        let path = path.to_owned();
        move |source| CorpusError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let files = WorldFiles {
        ratings: dir.join("ratings.tsv"),
        items: dir.join("items.tsv"),
        supplement: dir.join("supplement.jsonl"),
    };

    let mut w = BufWriter::new(fs::File::create(&files.ratings).map_err(io(&files.ratings))?);
    writeln!(w, "userID\titemID\trating").map_err(io(&files.ratings))?;
    for i in &world.interactions {
        writeln!(w, "{}\t{}\t{}", i.user_id, i.item_id, i.rating).map_err(io(&files.ratings))?;
    }
    w.flush().map_err(io(&files.ratings))?;

    let mut w = BufWriter::new(fs::File::create(&files.items).map_err(io(&files.items))?);
    writeln!(w, "id\ttitle\tyear\tgenres").map_err(io(&files.items))?;
    let mut sup = BufWriter::new(fs::File::create(&files.supplement).map_err(io(&files.supplement))?);
    for item in world.catalog.items() {
        writeln!(w, "{}\t{}\t{}\t{}", item.item_id, item.raw_title, item.release_year, item.genres.join("|"))
            .map_err(io(&files.items))?;
        if let Some(text) = &item.supplement_text {
            let line = serde_json::json!({"item_id": item.item_id, "text": text});
            writeln!(sup, "{line}").map_err(io(&files.supplement))?;
        }
    }
    w.flush().map_err(io(&files.items))?;
    sup.flush().map_err(io(&files.supplement))?;
    Ok(files)
}

/// Items per cluster, for inspection and tests.
pub fn clusters(world: &SyntheticWorld) -> BTreeMap<usize, Vec<ItemId>> {
    let mut out: BTreeMap<usize, Vec<ItemId>> = BTreeMap::new();
    for item in world.catalog.items() {
        out.entry(world.cluster_of[&item.item_id]).or_default().push(item.item_id.clone());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{catalog_documents, group_by_user, load_items, load_ratings, ContentLevel};
    use crate::embedding::{embed_catalog, LocalHashEmbedder};

    fn small() -> SynthConfig {
        SynthConfig {
            n_items: 120,
            n_clusters: 6,
            n_users: 20,
            min_ratings: 40,
            max_ratings: 60,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn deterministic_and_well_formed() {
        let a = generate(&small());
        let b = generate(&small());
        assert_eq!(a.interactions, b.interactions);
        assert_eq!(a.catalog.items(), b.catalog.items());
        assert_eq!(a.catalog.len(), 120);
        let users = group_by_user(&a.interactions);
        assert_eq!(users.len(), 20);
        assert!(users.values().all(|p| (40..=60).contains(&p.len())));
        assert!(a.interactions.iter().all(|i| (1.0..=5.0).contains(&i.rating) && (i.rating * 2.0).fract() == 0.0));
        let titles: HashSet<&str> = a.catalog.items().iter().map(|i| i.normalized_title.as_str()).collect();
        assert_eq!(titles.len(), 120);
    }

    #[test]
    fn round_trips_through_files() {
        let w = generate(&small());
        let dir = tempfile::tempdir().unwrap();
        let files = write_world(&w, dir.path()).unwrap();
        let catalog = load_items(&files.items, Some(&files.supplement)).unwrap();
        assert_eq!(catalog.items(), w.catalog.items());
        assert_eq!(load_ratings(&files.ratings).unwrap(), w.interactions);
    }

    #[test]
    fn embeddings_cluster() {
        let w = generate(&small());
        let docs = catalog_documents(&w.catalog, ContentLevel::PRUNED).unwrap();
        let store = embed_catalog(&LocalHashEmbedder::new(256), &docs, ContentLevel::PRUNED, None, false).unwrap();
        let (mut within, mut across) = (Vec::new(), Vec::new());
        for a in 0..store.len() {
            for b in a + 1..store.len() {
                let same = w.cluster_of[&store.ids()[a]] == w.cluster_of[&store.ids()[b]];
                let s = store.sim_idx(a, b);
                if same { within.push(s) } else { across.push(s) }
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(mean(&within) > mean(&across) + 0.2, "{} vs {}", mean(&within), mean(&across));
    }
}
