use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::Deserialize;

use super::{Catalog, CorpusError, Interaction, Item, UserSplit, RATING_MAX, RATING_MIN};
use crate::ids::{ItemId, UserId};

fn open(path: &Path) -> Result<BufReader<File>, CorpusError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| CorpusError::Io {
            path: path.to_owned(),
            source,
        })
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> CorpusError {
    CorpusError::Parse {
        path: path.to_owned(),
        line,
        message: message.into(),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_owned(),
        source,
    }
}

/// Reads a tab-separated ratings file with header `userID itemID rating`.
///
/// Extra columns are ignored; `movieID` is accepted as an alias for `itemID`.
pub fn load_ratings(path: &Path) -> Result<Vec<Interaction>, CorpusError> {
    let mut lines = open(path)?.lines();
    let header = match lines.next() {
        Some(h) => h.map_err(io_err(path))?,
        None => return Err(parse_err(path, 1, "missing header row")),
    };
    let columns: Vec<&str> = header.trim_end_matches('\r').split('\t').collect();
    let find = |names: &[&str]| columns.iter().position(|c| names.contains(c));
    let (user_col, item_col, rating_col) = match (
        find(&["userID"]),
        find(&["itemID", "movieID"]),
        find(&["rating"]),
    ) {
        (Some(u), Some(i), Some(r)) => (u, i, r),
        _ => return Err(parse_err(path, 1, "header must contain userID, itemID and rating")),
    };

    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let line = line.map_err(io_err(path))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let get = |col: usize| {
            fields
                .get(col)
                .map(|s| s.trim())
                .filter(|s| !s.is_empty())
                .ok_or_else(|| parse_err(path, line_no, format!("expected at least {} columns", columns.len())))
        };
        let user = get(user_col)?;
        let item = get(item_col)?;
        let rating_text = get(rating_col)?;
        let rating: f64 = rating_text
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("invalid rating {rating_text:?}")))?;
        if !(RATING_MIN..=RATING_MAX).contains(&rating) {
            return Err(CorpusError::RatingOutOfRange {
                path: path.to_owned(),
                line: line_no,
                rating,
            });
        }
        let interaction = Interaction::new(user, item, rating);
        if !seen.insert((interaction.user_id.clone(), interaction.item_id.clone())) {
            return Err(CorpusError::DuplicateInteraction {
                user: interaction.user_id,
                item: interaction.item_id,
            });
        }
        out.push(interaction);
    }
    Ok(out)
}

#[derive(Deserialize)]
struct SupplementRecord {
    item_id: String,
    text: String,
}

/// Reads the tab-separated items file and optionally attaches supplement
/// text from a JSON-lines file.
///
/// Required header columns: `id`, `title`, `year`. `genres` and any further
/// columns are `|`-separated multi-valued fields; extra columns become
/// `extra_metadata` keyed by their (lowercased) header name.
pub fn load_items(path: &Path, supplement_path: Option<&Path>) -> Result<Catalog, CorpusError> {
    let mut lines = open(path)?.lines();
    let header = match lines.next() {
        Some(h) => h.map_err(io_err(path))?,
        None => return Err(parse_err(path, 1, "missing header row")),
    };
    let columns: Vec<String> = header
        .trim_end_matches('\r')
        .split('\t')
        .map(|c| c.trim().to_owned())
        .collect();
    let find = |name: &str| columns.iter().position(|c| c.eq_ignore_ascii_case(name));
    let (id_col, title_col, year_col) = match (find("id"), find("title"), find("year")) {
        (Some(i), Some(t), Some(y)) => (i, t, y),
        _ => return Err(parse_err(path, 1, "header must contain id, title and year")),
    };
    let genres_col = find("genres");

    let mut items = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let line = line.map_err(io_err(path))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        let field = |col: usize| fields.get(col).copied().unwrap_or("");
        let id = field(id_col);
        let title = field(title_col);
        if id.is_empty() || title.is_empty() {
            return Err(parse_err(path, line_no, "id and title must be nonempty"));
        }
        let year: i32 = field(year_col)
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("invalid year {:?}", field(year_col))))?;
        if year <= 1800 {
            return Err(parse_err(path, line_no, format!("release year {year} must be after 1800")));
        }
        let genres = genres_col
            .map(|c| split_multi(field(c)))
            .unwrap_or_default();
        let mut item = Item::new(ItemId::new(id), title, year, genres);
        for (col, name) in columns.iter().enumerate() {
            if [Some(id_col), Some(title_col), Some(year_col), genres_col].contains(&Some(col)) {
                continue;
            }
            let values = split_multi(field(col));
            if !values.is_empty() {
                item.extra_metadata.insert(name.to_lowercase(), values.join(", "));
            }
        }
        items.push(item);
    }
    let mut catalog = Catalog::from_items(items)?;

    if let Some(sup) = supplement_path {
        for (idx, line) in open(sup)?.lines().enumerate() {
            let line = line.map_err(io_err(sup))?;
            if line.trim().is_empty() {
                continue;
            }
            let record: SupplementRecord = serde_json::from_str(&line)
                .map_err(|e| parse_err(sup, idx + 1, e.to_string()))?;
            match catalog.get_mut(&ItemId::new(record.item_id.clone())) {
                Some(item) => item.supplement_text = Some(record.text),
                None => tracing::warn!(item_id = %record.item_id, "supplement references unknown item; skipped"),
            }
        }
    }
    Ok(catalog)
}

fn split_multi(field: &str) -> Vec<String> {
    field
        .split('|')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Writes splits as JSON lines, one [`UserSplit`] per line.
pub fn write_splits(path: &Path, splits: &[UserSplit]) -> Result<(), CorpusError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for split in splits {
        let line = serde_json::to_string(split).expect("splits serialize");
        writeln!(w, "{line}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn load_splits(path: &Path) -> Result<BTreeMap<UserId, UserSplit>, CorpusError> {
    let mut out = BTreeMap::new();
    for (idx, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let split: UserSplit =
            serde_json::from_str(&line).map_err(|e| parse_err(path, idx + 1, e.to_string()))?;
        out.insert(split.user_id.clone(), split);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::File::create(&p).unwrap().write_all(body.as_bytes()).unwrap();
        p
    }

    #[test]
    fn ratings_parse() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "r.tsv", "userID\titemID\trating\nu1\ti1\t4.0\nu1\ti2\t2.5\n");
        let r = load_ratings(&p).unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!(r[1], Interaction::new("u1", "i2", 2.5));
    }

    #[test]
    fn ratings_header_only_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "r.tsv", "userID\titemID\trating\n");
        assert!(load_ratings(&p).unwrap().is_empty());
    }

    #[test]
    fn rating_out_of_range_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "r.tsv", "userID\titemID\trating\nu1\ti1\t4\nu1\ti2\t9\n");
        match load_ratings(&p) {
            Err(CorpusError::RatingOutOfRange { line, rating, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(rating, 9.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_row_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "r.tsv", "userID\titemID\trating\nu1\ti1\n");
        let err = load_ratings(&p).unwrap_err();
        assert!(matches!(err, CorpusError::Parse { line: 2, .. }), "{err}");
        let p = write(&dir, "r2.tsv", "userID\titemID\trating\nu1\ti1\tgood\n");
        assert!(matches!(load_ratings(&p).unwrap_err(), CorpusError::Parse { line: 2, .. }));
    }

    #[test]
    fn duplicate_interaction_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "r.tsv", "userID\titemID\trating\nu1\ti1\t4\nu1\ti1\t3\n");
        assert!(matches!(load_ratings(&p), Err(CorpusError::DuplicateInteraction { .. })));
    }

    #[test]
    fn items_with_metadata_and_supplement() {
        let dir = tempfile::tempdir().unwrap();
        let items = write(
            &dir,
            "items.tsv",
            "id\ttitle\tyear\tgenres\ttags\tdirectors\n\
             1\tMatrix, The\t1999\tAction|Sci-Fi\tcyberpunk|dystopia\tLana Wachowski|Lilly Wachowski\n\
             2\tInception\t2010\tSci-Fi\t\t\n",
        );
        let sup = write(
            &dir,
            "sup.jsonl",
            "{\"item_id\": \"1\", \"text\": \"A hacker learns the truth.\"}\n{\"item_id\": \"99\", \"text\": \"orphan\"}\n",
        );
        let catalog = load_items(&items, Some(&sup)).unwrap();
        let matrix = catalog.get(&"1".into()).unwrap();
        assert_eq!(matrix.normalized_title, "The Matrix (1999)");
        assert_eq!(matrix.genres, vec!["Action", "Sci-Fi"]);
        assert_eq!(matrix.extra_metadata["tags"], "cyberpunk, dystopia");
        assert_eq!(matrix.supplement_text.as_deref(), Some("A hacker learns the truth."));
        let inception = catalog.get(&"2".into()).unwrap();
        assert!(inception.supplement_text.is_none());
        assert!(inception.extra_metadata.is_empty());
    }

    #[test]
    fn duplicate_item_id_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "i.tsv", "id\ttitle\tyear\tgenres\n1\tA\t2000\tDrama\n1\tB\t2001\tDrama\n");
        assert!(matches!(load_items(&p, None), Err(CorpusError::DuplicateItem(_))));
    }

    #[test]
    fn splits_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let split = UserSplit {
            user_id: "u".into(),
            example_set: vec![Interaction::new("u", "a", 4.0)],
            feedback_set: vec![Interaction::new("u", "b", 2.0)],
            evaluation_set: vec![Interaction::new("u", "c", 5.0)],
        };
        let p = dir.path().join("splits.jsonl");
        write_splits(&p, std::slice::from_ref(&split)).unwrap();
        let back = load_splits(&p).unwrap();
        assert_eq!(back[&UserId::from("u")], split);
    }
}
