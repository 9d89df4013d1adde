//! Fuzzy title lookup against the catalog.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::corpus::Catalog;
use crate::ids::ItemId;

/// Unit-cost edit distance over Unicode scalar values.
pub fn levenshtein(x: &str, y: &str) -> usize {
    let a: Vec<char> = x.chars().collect();
    let b: Vec<char> = y.chars().collect();
    levenshtein_chars(&a, &b)
}

fn levenshtein_chars(a: &[char], b: &[char]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Normalized Levenshtein similarity `1 − 2·LD / (|x| + |y| + LD)`.
pub fn nls(x: &str, y: &str) -> f64 {
    let a: Vec<char> = x.chars().collect();
    let b: Vec<char> = y.chars().collect();
    nls_chars(&a, &b)
}

fn nls_chars(a: &[char], b: &[char]) -> f64 {
    let ld = levenshtein_chars(a, b);
    let denom = a.len() + b.len() + ld;
    if denom == 0 {
        return 1.0;
    }
    1.0 - 2.0 * ld as f64 / denom as f64
}

/// Lowercase, drop punctuation other than parentheses, collapse whitespace.
pub fn canonicalize(title: &str) -> String {
    let kept: String = title
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace() || *c == '(' || *c == ')')
        .flat_map(char::to_lowercase)
        .collect();
    kept.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMethod {
    Exact,
    Fuzzy,
    Unmatched,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub raw_title: String,
    pub matched_item: Option<ItemId>,
    pub similarity: f64,
    pub method: MatchMethod,
}

struct Entry {
    chars: Vec<char>,
    item_id: ItemId,
}

/// Canonicalized catalog titles for exact and fuzzy lookup.
pub struct TitleIndex {
    exact: HashMap<String, ItemId>,
    // sorted by (length, item_id) so a length band is a contiguous slice
    entries: Vec<Entry>,
}

impl TitleIndex {
    pub fn from_catalog(catalog: &Catalog) -> Self {
        Self::from_titles(catalog.items().iter().map(|i| (i.normalized_title.as_str(), i.item_id.clone())))
    }

    pub fn from_titles<'a>(titles: impl IntoIterator<Item = (&'a str, ItemId)>) -> Self {
        let mut exact: HashMap<String, ItemId> = HashMap::new();
        let mut entries = Vec::new();
        for (title, id) in titles {
            let canon = canonicalize(title);
            match exact.get(&canon) {
                Some(existing) if *existing <= id => {}
                _ => {
                    exact.insert(canon.clone(), id.clone());
                }
            }
            entries.push(Entry {
                chars: canon.chars().collect(),
                item_id: id,
            });
        }
        entries.sort_by(|a, b| a.chars.len().cmp(&b.chars.len()).then_with(|| a.item_id.cmp(&b.item_id)));
        Self { exact, entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Exact lookup, then the best fuzzy candidate if it clears `threshold`.
    ///
    /// Only candidates whose length lies in `[n·t, n/t]` are scored: since
    /// `LD ≥ ||x| − |y||`, anything outside that band has NLS below `t`.
    pub fn lookup(&self, raw: &str, threshold: f64) -> MatchResult {
        let canon = canonicalize(raw);
        if let Some(id) = self.exact.get(&canon) {
            return MatchResult {
                raw_title: raw.to_string(),
                matched_item: Some(id.clone()),
                similarity: 1.0,
                method: MatchMethod::Exact,
            };
        }
        let q: Vec<char> = canon.chars().collect();
        let n = q.len() as f64;
        let t = threshold.clamp(f64::MIN_POSITIVE, 1.0);
        let lo = (n * t).ceil() as usize;
        let hi = (n / t).floor() as usize;
        let start = self.entries.partition_point(|e| e.chars.len() < lo);
        let end = self.entries.partition_point(|e| e.chars.len() <= hi);
        let mut best: Option<(f64, &ItemId)> = None;
        for e in &self.entries[start..end.max(start)] {
            let s = nls_chars(&q, &e.chars);
            best = match best {
                Some((bs, bid)) if bs > s || (bs == s && bid <= &e.item_id) => Some((bs, bid)),
                _ => Some((s, &e.item_id)),
            };
        }
        match best {
            Some((s, id)) if s >= threshold => MatchResult {
                raw_title: raw.to_string(),
                matched_item: Some(id.clone()),
                similarity: s,
                method: MatchMethod::Fuzzy,
            },
            other => MatchResult {
                raw_title: raw.to_string(),
                matched_item: None,
                similarity: other.map_or(0.0, |(s, _)| s),
                method: MatchMethod::Unmatched,
            },
        }
    }
}

/// Matches `raw` and records a miss in `ledger` when given.
pub fn match_title(raw: &str, index: &TitleIndex, threshold: f64, ledger: Option<&UnmatchedLedger>) -> MatchResult {
    let r = index.lookup(raw, threshold);
    if r.method == MatchMethod::Unmatched {
        if let Some(l) = ledger {
            l.record(raw);
        }
    }
    r
}

/// Occurrence counts of titles that failed to match. Safe to share across
/// threads.
#[derive(Default)]
pub struct UnmatchedLedger {
    counts: Mutex<HashMap<String, u64>>,
}

pub const REVIEW_MIN_COUNT: u64 = 3;

impl UnmatchedLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, raw: &str) {
        *self.counts.lock().expect("ledger lock").entry(raw.to_string()).or_insert(0) += 1;
    }

    pub fn merge(&self, other: &UnmatchedLedger) {
        let theirs = other.counts();
        let mut mine = self.counts.lock().expect("ledger lock");
        for (k, v) in theirs {
            *mine.entry(k).or_insert(0) += v;
        }
    }

    pub fn counts(&self) -> BTreeMap<String, u64> {
        self.counts.lock().expect("ledger lock").iter().map(|(k, v)| (k.clone(), *v)).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.lock().expect("ledger lock").values().sum()
    }

    /// Titles seen at least `min_count` times, by count descending then title.
    pub fn frequent(&self, min_count: u64) -> Vec<(String, u64)> {
        let mut v: Vec<(String, u64)> = self.counts().into_iter().filter(|(_, c)| *c >= min_count).collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        v
    }

    /// Writes `raw_title,count` rows for titles seen at least `min_count` times.
    pub fn write_review_csv(&self, path: &Path, min_count: u64) -> std::io::Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["raw_title", "count"])?;
        for (title, count) in self.frequent(min_count) {
            w.write_record([title, count.to_string()])?;
        }
        w.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Full-matrix DP written independently of the two-row version.
    fn oracle_ld(x: &str, y: &str) -> usize {
        let a: Vec<char> = x.chars().collect();
        let b: Vec<char> = y.chars().collect();
        let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
        for (i, row) in d.iter_mut().enumerate() {
            row[0] = i;
        }
        for j in 0..=b.len() {
            d[0][j] = j;
        }
        for i in 1..=a.len() {
            for j in 1..=b.len() {
                let c = if a[i - 1] == b[j - 1] { 0 } else { 1 };
                d[i][j] = (d[i - 1][j] + 1).min(d[i][j - 1] + 1).min(d[i - 1][j - 1] + c);
            }
        }
        d[a.len()][b.len()]
    }

    #[test]
    fn levenshtein_examples() {
        assert_eq!(levenshtein("abc", "abc"), 0);
        assert_eq!(levenshtein("abc", ""), 3);
        assert_eq!(levenshtein("", "abc"), 3);
        assert_eq!(levenshtein("kitten", "sitting"), 3);
    }

    #[test]
    fn nls_examples() {
        assert_eq!(nls("x", "x"), 1.0);
        assert_eq!(nls("", ""), 1.0);
        assert_eq!(nls("abc", ""), 0.0);
        assert!((nls("abc", "abd") - (1.0 - 2.0 / 7.0)).abs() < 1e-12);
        // 17 characters each, one substitution: 1 - 2/35
        assert!((nls("The Matric (1999)", "The Matrix (1999)") - (1.0 - 2.0 / 35.0)).abs() < 1e-12);
    }

    #[test]
    fn canonical_forms() {
        assert_eq!(canonicalize("  The   Matrix (1999) "), "the matrix (1999)");
        assert_eq!(canonicalize("Monsters, Inc. (2001)"), "monsters inc (2001)");
        assert_eq!(canonicalize("WALL·E"), "walle");
    }

    fn index() -> TitleIndex {
        TitleIndex::from_titles([
            ("The Matrix (1999)", ItemId::from("2571")),
            ("Heat (1995)", ItemId::from("6")),
            ("Toy Story (1995)", ItemId::from("1")),
            ("Toy Story 2 (1999)", ItemId::from("3114")),
        ])
    }

    #[test]
    fn exact_fuzzy_and_unmatched() {
        let idx = index();
        let r = idx.lookup("the  matrix (1999)", 0.75);
        assert_eq!((r.method, r.similarity), (MatchMethod::Exact, 1.0));
        assert_eq!(r.matched_item, Some("2571".into()));

        let r = idx.lookup("The Matric (1999)", 0.75);
        assert_eq!(r.method, MatchMethod::Fuzzy);
        assert_eq!(r.matched_item, Some("2571".into()));
        assert!((r.similarity - (1.0 - 2.0 / 35.0)).abs() < 1e-12);

        let r = idx.lookup("Zzyzx Quasar Nine", 0.75);
        assert_eq!(r.method, MatchMethod::Unmatched);
        assert_eq!(r.matched_item, None);
    }

    #[test]
    fn fuzzy_ties_prefer_smaller_id() {
        let idx = TitleIndex::from_titles([("abcd", ItemId::from("b")), ("abce", ItemId::from("a"))]);
        assert_eq!(idx.lookup("abcf", 0.5).matched_item, Some("a".into()));
        let dup = TitleIndex::from_titles([("Same (2000)", ItemId::from("9")), ("same (2000)", ItemId::from("10"))]);
        assert_eq!(dup.lookup("Same (2000)", 0.9).matched_item, Some("10".into()));
    }

    #[test]
    fn pruned_lookup_agrees_with_full_scan() {
        let titles = [
            "Alien (1979)",
            "Aliens (1986)",
            "Alien 3 (1992)",
            "Heat (1995)",
            "Heathers (1989)",
            "Up (2009)",
            "The Lord of the Rings (2001)",
        ];
        let idx = TitleIndex::from_titles(titles.iter().enumerate().map(|(i, t)| (*t, ItemId::new(format!("{i}")))));
        for q in ["Alien (1979", "Aliens", "heat 1995", "Up", "Lord of the Rings (2001)", "Heather (1989)"] {
            for t in [0.5, 0.75, 0.9] {
                let cq = canonicalize(q);
                let full = titles
                    .iter()
                    .enumerate()
                    .map(|(i, s)| (nls(&cq, &canonicalize(s)), i))
                    .fold(None::<(f64, usize)>, |acc, (s, i)| match acc {
                        Some((bs, bi)) if bs > s || (bs == s && format!("{bi}") <= format!("{i}")) => Some((bs, bi)),
                        _ => Some((s, i)),
                    })
                    .filter(|(s, _)| *s >= t)
                    .map(|(_, i)| ItemId::new(format!("{i}")));
                assert_eq!(idx.lookup(q, t).matched_item, full, "{q} @ {t}");
            }
        }
    }

    #[test]
    fn ledger_counts_concurrently_and_exports() {
        let idx = index();
        let ledger = UnmatchedLedger::new();
        std::thread::scope(|s| {
            for _ in 0..4 {
                s.spawn(|| {
                    for _ in 0..25 {
                        match_title("Nowhere Film (2020)", &idx, 0.75, Some(&ledger));
                    }
                    match_title("Heat (1995)", &idx, 0.75, Some(&ledger));
                });
            }
        });
        ledger.record("Rare (1990)");
        assert_eq!(ledger.counts()["Nowhere Film (2020)"], 100);
        assert_eq!(ledger.total(), 101);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("unmatched.csv");
        ledger.write_review_csv(&path, REVIEW_MIN_COUNT).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "raw_title,count\nNowhere Film (2020),100\n");
    }

    fn small_word() -> impl Strategy<Value = String> {
        proptest::collection::vec(prop_oneof![Just('a'), Just('b'), Just('c')], 0..=12)
            .prop_map(|v| v.into_iter().collect())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn nls_matches_oracle(x in "[a-e ]{0,16}", y in "[a-e ]{0,16}") {
            let ld = oracle_ld(&x, &y);
            let n = x.chars().count() + y.chars().count() + ld;
            let want = if n == 0 { 1.0 } else { 1.0 - 2.0 * ld as f64 / n as f64 };
            prop_assert_eq!(nls(&x, &y), want);
            prop_assert!((0.0..=1.0).contains(&want));
            prop_assert_eq!(want == 1.0, x == y);
        }

        #[test]
        fn metric_axioms(x in small_word(), y in small_word(), z in small_word()) {
            prop_assert_eq!(levenshtein(&x, &y), levenshtein(&y, &x));
            prop_assert!(levenshtein(&x, &z) <= levenshtein(&x, &y) + levenshtein(&y, &z));
        }

        #[test]
        fn raising_threshold_never_creates_matches(q in "[a-z ]{1,20}", t1 in 0.05f64..1.0, dt in 0.0f64..0.5) {
            let idx = index();
            let t2 = (t1 + dt).min(1.0);
            if idx.lookup(&q, t1).method == MatchMethod::Unmatched {
                prop_assert_eq!(idx.lookup(&q, t2).method, MatchMethod::Unmatched);
            }
        }
    }
}
