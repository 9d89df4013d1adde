//! Word-level tokenization shared by document pruning and the local
//! embedding provider.

use std::collections::HashSet;
use std::sync::OnceLock;

static STOPWORDS_RAW: &str = include_str!("../assets/stopwords_en.txt");

/// Lowercases and splits on runs of non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// The shipped English stop-word list.
///
/// Entries containing an apostrophe can never survive [`tokenize`]; their
/// fragments (`don`, `t`, ...) are listed separately.
pub fn stopwords() -> &'static HashSet<String> {
    static SET: OnceLock<HashSet<String>> = OnceLock::new();
    SET.get_or_init(|| {
        STOPWORDS_RAW
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_owned)
            .collect()
    })
}

pub fn is_stopword(token: &str) -> bool {
    stopwords().contains(token)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_lowercases_and_splits() {
        assert_eq!(tokenize("The Matrix (1999)!"), vec!["the", "matrix", "1999"]);
        assert_eq!(tokenize("sci-fi,action"), vec!["sci", "fi", "action"]);
        assert!(tokenize("  --  ").is_empty());
    }

    #[test]
    fn stopword_list_is_loaded() {
        assert!(stopwords().len() >= 170);
        assert!(is_stopword("the"));
        assert!(!is_stopword("matrix"));
    }
}
