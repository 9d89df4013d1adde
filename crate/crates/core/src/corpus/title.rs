const ARTICLES: [&str; 3] = ["The", "An", "A"];

/// Reorders `"Matrix, The"` into `"The Matrix (1999)"`.
///
/// A trailing `(yyyy)` already present in `raw_title` is dropped before the
/// year is re-appended, so the year occurs exactly once. Only the final
/// `", <article>"` suffix is moved.
pub fn normalize_title(raw_title: &str, year: i32) -> String {
    let trimmed = strip_year_suffix(raw_title.trim());
    let (article, rest) = split_trailing_article(trimmed);
    match article {
        Some(article) => format!("{article} {rest} ({year})"),
        None => format!("{rest} ({year})"),
    }
}

fn strip_year_suffix(s: &str) -> &str {
    let bytes = s.as_bytes();
    if bytes.len() >= 6 && s.ends_with(')') {
        let open = bytes.len() - 6;
        if bytes[open] == b'(' && bytes[open + 1..bytes.len() - 1].iter().all(u8::is_ascii_digit) {
            return s[..open].trim_end();
        }
    }
    s
}

fn split_trailing_article(s: &str) -> (Option<&str>, &str) {
    for article in ARTICLES {
        let suffix_len = article.len() + 2; // ", " + article
        if s.len() <= suffix_len || !s.is_char_boundary(s.len() - suffix_len) {
            continue;
        }
        let (head, tail) = s.split_at(s.len() - suffix_len);
        if tail.starts_with(", ") && tail[2..].eq_ignore_ascii_case(article) {
            let head = head.trim_end();
            if !head.is_empty() {
                return (Some(&tail[2..]), head);
            }
        }
    }
    (None, s)
}

#[cfg(test)]
mod tests {
    use super::normalize_title;

    #[test]
    fn moves_trailing_article() {
        assert_eq!(normalize_title("Matrix, The", 1999), "The Matrix (1999)");
        assert_eq!(normalize_title("Beautiful Mind, A", 2001), "A Beautiful Mind (2001)");
        assert_eq!(normalize_title("American Tail, An", 1986), "An American Tail (1986)");
        assert_eq!(normalize_title("Matrix, the", 1999), "the Matrix (1999)");
    }

    #[test]
    fn plain_title_gets_year() {
        assert_eq!(normalize_title("Inception", 2010), "Inception (2010)");
    }

    #[test]
    fn existing_year_is_not_duplicated() {
        assert_eq!(normalize_title("Matrix, The (1999)", 1999), "The Matrix (1999)");
        assert_eq!(normalize_title("Up (2009)", 2009), "Up (2009)");
    }

    #[test]
    fn only_final_article_moves() {
        assert_eq!(
            normalize_title("Léon, The Professional, The", 1994),
            "The Léon, The Professional (1994)"
        );
    }

    #[test]
    fn article_words_inside_title_are_untouched() {
        assert_eq!(normalize_title("Theory", 2000), "Theory (2000)");
        assert_eq!(normalize_title("Anathema", 2000), "Anathema (2000)");
        assert_eq!(normalize_title(", The", 2000), ", The (2000)");
    }
}
