use std::collections::{HashMap, HashSet};
use std::sync::{Arc, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gumbel};
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{ChatClient, ChatRequest, Direction, LlmError, Role, SessionLog};
use crate::conversation::extract_titles;
use crate::corpus::Catalog;
use crate::embedding::EmbeddingStore;
use crate::hashing::derive_seed;
use crate::ids::ItemId;
use crate::matching::{MatchMethod, TitleIndex};
use crate::prompts::LESS_POPULAR_SENTENCE;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulatorConfig {
    /// Probability that an emitted title carries a one-letter typo.
    pub typo_rate: f64,
    /// Weight on standardized popularity added to every candidate's score.
    pub popularity_bias: f64,
    /// Weight on standardized popularity subtracted when asked for less
    /// popular titles.
    pub less_popular_penalty: f64,
}

impl Default for SimulatorConfig {
    fn default() -> Self {
        Self {
            typo_rate: 0.0,
            popularity_bias: 2.0,
            less_popular_penalty: 4.0,
        }
    }
}

/// What the simulator understood from a conversation.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParsedHistory {
    pub liked: Vec<ItemId>,
    pub disliked: Vec<ItemId>,
    pub watched: HashSet<ItemId>,
    pub previous: HashSet<ItemId>,
    pub requested: Option<usize>,
    pub cutoff: Option<i32>,
    pub is_final: bool,
    pub less_popular: bool,
}

fn count_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)recommend (?:exactly )?(\d+) (?:more |different )?movies?\b").unwrap())
}

fn cutoff_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)released in or before (\d{4})").unwrap())
}

fn marked_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^- (.+) \[(liked|disliked)\]$").unwrap())
}

/// `- ` lines following `header` up to the next line that is not one.
fn section<'a>(text: &'a str, header: &str) -> Vec<&'a str> {
    let Some(pos) = text.rfind(header) else {
        return Vec::new();
    };
    text[pos + header.len()..]
        .lines()
        .skip(1)
        .take_while(|l| l.starts_with("- "))
        .collect()
}

/// Nearest-neighbour stand-in for a chat model: reads the user's history
/// out of the prompts and ranks catalog items by similarity to what was
/// liked minus what was disliked.
pub struct SimulatedRecommender {
    catalog: Arc<Catalog>,
    store: Arc<EmbeddingStore>,
    titles: TitleIndex,
    popularity: HashMap<ItemId, f64>,
    config: SimulatorConfig,
}

impl SimulatedRecommender {
    /// `interaction_counts` gives each item's global frequency. Popularity
    /// is the log count standardized over the catalog, so it lives on the
    /// same scale as the standardized similarity score.
    pub fn new(
        catalog: Arc<Catalog>,
        store: Arc<EmbeddingStore>,
        interaction_counts: &HashMap<ItemId, usize>,
        config: SimulatorConfig,
    ) -> Self {
        let logs: Vec<(ItemId, f64)> = catalog
            .items()
            .iter()
            .map(|it| {
                let c = interaction_counts.get(&it.item_id).copied().unwrap_or(0);
                (it.item_id.clone(), (1.0 + c as f64).ln())
            })
            .collect();
        let n = logs.len().max(1) as f64;
        let mean = logs.iter().map(|(_, l)| l).sum::<f64>() / n;
        let sd = (logs.iter().map(|(_, l)| (l - mean).powi(2)).sum::<f64>() / n).sqrt();
        let popularity = logs
            .into_iter()
            .map(|(id, l)| (id, if sd > 0.0 { (l - mean) / sd } else { 0.0 }))
            .collect();
        let titles = TitleIndex::from_catalog(&catalog);
        Self {
            catalog,
            store,
            titles,
            popularity,
            config,
        }
    }

    fn resolve(&self, title: &str) -> Option<ItemId> {
        let r = self.titles.lookup(title, 0.75);
        (r.method != MatchMethod::Unmatched).then(|| r.matched_item).flatten()
    }

    pub fn parse_history(&self, messages: &[super::ChatMessage]) -> ParsedHistory {
        let mut h = ParsedHistory::default();
        let mut users = messages.iter().filter(|m| m.role == Role::User);
        if let Some(first) = users.next() {
            for line in section(&first.content, "Movies I have watched:") {
                if let Some(c) = marked_re().captures(line) {
                    if let Some(id) = self.resolve(&c[1]) {
                        h.watched.insert(id.clone());
                        if &c[2] == "liked" {
                            h.liked.push(id);
                        } else {
                            h.disliked.push(id);
                        }
                    }
                }
            }
        }
        for m in messages.iter().filter(|m| m.role == Role::User).skip(1) {
            for (header, liked) in [("I liked:", true), ("I did not like:", false)] {
                for line in section(&m.content, header) {
                    if let Some(id) = self.resolve(&line[2..]) {
                        if liked {
                            h.liked.push(id);
                        } else {
                            h.disliked.push(id);
                        }
                    }
                }
            }
        }
        for m in messages.iter().filter(|m| m.role == Role::Assistant) {
            for t in extract_titles(&m.content).unwrap_or_default() {
                if let Some(id) = self.resolve(&t) {
                    h.previous.insert(id);
                }
            }
        }
        if let Some(last) = messages.last() {
            h.requested = count_re().captures(&last.content).and_then(|c| c[1].parse().ok());
            h.is_final = last.content.contains("final list");
            h.less_popular = last.content.contains(LESS_POPULAR_SENTENCE);
        }
        h.cutoff = messages
            .iter()
            .rev()
            .find_map(|m| cutoff_re().captures(&m.content))
            .and_then(|c| c[1].parse().ok());
        h
    }

    /// Summed similarity to liked items minus summed similarity to disliked
    /// items, for every eligible candidate.
    pub fn raw_scores(&self, h: &ParsedHistory) -> Vec<(ItemId, f64)> {
        let liked: Vec<usize> = h.liked.iter().filter_map(|id| self.store.index_of(id)).collect();
        let disliked: Vec<usize> = h.disliked.iter().filter_map(|id| self.store.index_of(id)).collect();
        self.catalog
            .items()
            .iter()
            .filter(|it| h.cutoff.is_none_or(|c| it.release_year <= c))
            .filter(|it| !h.watched.contains(&it.item_id))
            .filter(|it| h.is_final || !h.previous.contains(&it.item_id))
            .filter_map(|it| {
                let c = self.store.index_of(&it.item_id)?;
                let s: f64 = liked.iter().map(|&l| self.store.sim_idx(c, l)).sum::<f64>()
                    - disliked.iter().map(|&d| self.store.sim_idx(c, d)).sum::<f64>();
                Some((it.item_id.clone(), s))
            })
            .collect()
    }

    fn final_scores(&self, h: &ParsedHistory) -> Vec<(ItemId, f64)> {
        let raw = self.raw_scores(h);
        let n = raw.len().max(1) as f64;
        let mean = raw.iter().map(|(_, s)| s).sum::<f64>() / n;
        let sd = (raw.iter().map(|(_, s)| (s - mean).powi(2)).sum::<f64>() / n).sqrt();
        let weight = if h.less_popular {
            self.config.popularity_bias - self.config.less_popular_penalty
        } else {
            self.config.popularity_bias
        };
        raw.into_iter()
            .map(|(id, s)| {
                let z = if sd > 0.0 { (s - mean) / sd } else { 0.0 };
                let pop = self.popularity.get(&id).copied().unwrap_or(0.0);
                (id, z + weight * pop)
            })
            .collect()
    }

    fn pick(&self, mut scored: Vec<(ItemId, f64)>, n: usize, temperature: f64, rng: &mut ChaCha8Rng) -> Vec<ItemId> {
        if temperature > 0.0 {
            // Gumbel-top-k: sampling without replacement from softmax(score / t)
            let g = Gumbel::new(0.0, 1.0).expect("valid gumbel");
            for (_, s) in scored.iter_mut() {
                *s = *s / temperature + g.sample(rng);
            }
        }
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        scored.into_iter().take(n).map(|(id, _)| id).collect()
    }

    fn with_typo(title: &str, rng: &mut ChaCha8Rng) -> String {
        let chars: Vec<char> = title.chars().collect();
        let name_end = title.rfind(" (").map_or(chars.len(), |b| title[..b].chars().count());
        let letters: Vec<usize> = (0..name_end).filter(|&i| chars[i].is_ascii_alphabetic()).collect();
        if letters.is_empty() {
            return title.to_string();
        }
        let pos = letters[rng.random_range(0..letters.len())];
        let orig = chars[pos];
        let mut rep = (b'a' + rng.random_range(0..25u8)) as char;
        if rep >= orig.to_ascii_lowercase() {
            rep = (rep as u8 + 1) as char;
        }
        if orig.is_ascii_uppercase() {
            rep = rep.to_ascii_uppercase();
        }
        let mut out = chars;
        out[pos] = rep;
        out.into_iter().collect()
    }

    /// The completion text for a conversation.
    pub fn respond(&self, request: &ChatRequest) -> String {
        let h = self.parse_history(request.messages);
        let n = h.requested.unwrap_or(10);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(request.seed, &["simulated", &request.turn.to_string()]));
        let picks = self.pick(self.final_scores(&h), n, request.temperature, &mut rng);
        let mut out = String::new();
        for (i, id) in picks.iter().enumerate() {
            let title = self.catalog.title_of(id).unwrap_or(id.as_str());
            let title = if self.config.typo_rate > 0.0 && rng.random::<f64>() < self.config.typo_rate {
                Self::with_typo(title, &mut rng)
            } else {
                title.to_string()
            };
            if i > 0 {
                out.push('\n');
            }
            out.push_str(&format!("{}. {title}", i + 1));
        }
        out
    }
}

impl ChatClient for SimulatedRecommender {
    fn name(&self) -> &str {
        "simulated"
    }

    fn complete(&self, request: &ChatRequest, log: &mut SessionLog) -> Result<String, LlmError> {
        request.validate()?;
        log.push(request.turn, Direction::Request, request.last_user());
        let text = self.respond(request);
        if text.is_empty() {
            log.push(request.turn, Direction::Error, "no eligible candidates");
            return Err(LlmError::Protocol("simulated recommender has no eligible candidates".into()));
        }
        log.push(request.turn, Direction::Response, text.clone());
        Ok(text)
    }
}
