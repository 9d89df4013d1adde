use std::sync::OnceLock;

use regex::Regex;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
#[error("no numbered list found in completion ({preview:?})")]
pub struct ExtractError {
    pub preview: String,
}

fn list_line() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*\d+\s*[.)]\s+(.+?)\s*$").unwrap())
}

fn year_paren() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\(\d{4}\)").unwrap())
}

/// Cuts explanation text off a list entry: everything after the year
/// parenthesis, or failing that after the first " - ", " — " or ": ".
fn title_segment(entry: &str) -> String {
    let entry = entry.replace("**", "");
    let entry = entry.trim();
    let cut = match year_paren().find(entry) {
        Some(m) => &entry[..m.end()],
        None => [" - ", " — ", " – ", ": "]
            .iter()
            .filter_map(|d| entry.find(d))
            .min()
            .map_or(entry, |i| &entry[..i]),
    };
    cut.trim().trim_matches(|c| c == '"' || c == '“' || c == '”' || c == '*').trim().to_string()
}

/// Titles from the numbered-list lines of a completion, in order.
pub fn extract_titles(completion: &str) -> Result<Vec<String>, ExtractError> {
    let titles: Vec<String> = completion
        .lines()
        .filter_map(|l| list_line().captures(l))
        .map(|c| title_segment(&c[1]))
        .filter(|t| !t.is_empty())
        .collect();
    if titles.is_empty() {
        let preview: String = completion.chars().take(80).collect();
        return Err(ExtractError { preview });
    }
    Ok(titles)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbered_list_with_explanations() {
        let got = extract_titles("1. The Matrix (1999) - a classic\n2. Inception (2010)").unwrap();
        assert_eq!(got, vec!["The Matrix (1999)", "Inception (2010)"]);
    }

    #[test]
    fn alternate_delimiter_and_preamble() {
        assert_eq!(extract_titles("Here are picks:\n1) Up (2009)").unwrap(), vec!["Up (2009)"]);
    }

    #[test]
    fn explanation_without_year() {
        let got = extract_titles("1. Heat: a heist film\n2. **Alien** — scary\n3. \"Up\" - fun").unwrap();
        assert_eq!(got, vec!["Heat", "Alien", "Up"]);
    }

    #[test]
    fn year_paren_ends_title() {
        let got = extract_titles("10. Star Wars: Episode IV - A New Hope (1977): space opera").unwrap();
        assert_eq!(got, vec!["Star Wars: Episode IV - A New Hope (1977)"]);
    }

    #[test]
    fn prose_is_an_error() {
        assert!(extract_titles("I think you would enjoy some thrillers.").is_err());
        assert!(extract_titles("").is_err());
    }
}
