use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{normalize, EmbeddingError, EmbeddingProvider, EmbeddingRecord, EmbeddingStore};
use crate::corpus::ContentLevel;
use crate::ids::ItemId;

fn cache_err(path: &Path, message: impl ToString) -> EmbeddingError {
    EmbeddingError::Cache {
        path: path.display().to_string(),
        message: message.to_string(),
    }
}

pub fn read_embedding_cache(path: &Path) -> Result<Vec<EmbeddingRecord>, EmbeddingError> {
    let file = fs::File::open(path).map_err(|e| cache_err(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| cache_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: EmbeddingRecord =
            serde_json::from_str(&line).map_err(|e| cache_err(path, format!("line {}: {e}", n + 1)))?;
        if rec.vector.len() != rec.dim {
            return Err(cache_err(path, format!("line {}: dim field disagrees with vector length", n + 1)));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_embedding_cache(path: &Path, records: &[EmbeddingRecord]) -> Result<(), EmbeddingError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| cache_err(path, e))?;
    }
    let tmp = path.with_extension("jsonl.tmp");
    {
        let mut w = BufWriter::new(fs::File::create(&tmp).map_err(|e| cache_err(path, e))?);
        for r in records {
            serde_json::to_writer(&mut w, r).map_err(|e| cache_err(path, e))?;
            w.write_all(b"\n").map_err(|e| cache_err(path, e))?;
        }
        w.flush().map_err(|e| cache_err(path, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| cache_err(path, e))
}

/// Embeds every document, reusing cached vectors where present.
///
/// Cached records are immutable: an item already in the cache at this level
/// is never re-embedded unless `invalidate` is set, in which case the cache
/// file is discarded first. New vectors are written to the cache before the
/// store is returned.
pub fn embed_catalog(
    provider: &dyn EmbeddingProvider,
    documents: &BTreeMap<ItemId, String>,
    level: ContentLevel,
    cache_path: Option<&Path>,
    invalidate: bool,
) -> Result<EmbeddingStore, EmbeddingError> {
    if documents.is_empty() {
        return Err(EmbeddingError::NoDocuments);
    }
    let dim = provider.dim();
    let mut cached: HashMap<ItemId, EmbeddingRecord> = HashMap::new();
    let mut extra: Vec<EmbeddingRecord> = Vec::new();
    if let Some(path) = cache_path.filter(|p| p.exists()) {
        if invalidate {
            fs::remove_file(path).map_err(|e| cache_err(path, e))?;
        } else {
            for rec in read_embedding_cache(path)? {
                if rec.level != level || !documents.contains_key(&rec.item_id) {
                    extra.push(rec);
                    continue;
                }
                if rec.dim != dim {
                    return Err(cache_err(
                        path,
                        format!("cached dimension {} differs from provider dimension {dim}; invalidate the cache", rec.dim),
                    ));
                }
                cached.insert(rec.item_id.clone(), rec);
            }
        }
    }

    let missing: Vec<(&ItemId, &String)> = documents.iter().filter(|(id, _)| !cached.contains_key(*id)).collect();
    if !missing.is_empty() {
        let texts: Vec<String> = missing.iter().map(|(_, t)| (*t).clone()).collect();
        let failed = || missing.iter().map(|(id, _)| (*id).clone()).collect::<Vec<_>>();
        let vectors = provider.embed(&texts).map_err(|e| match e {
            EmbeddingError::Provider { provider, message, .. } => EmbeddingError::Provider {
                provider,
                failed: failed(),
                message,
            },
            other => EmbeddingError::Provider {
                provider: provider.name().to_string(),
                failed: failed(),
                message: other.to_string(),
            },
        })?;
        for ((id, _), v) in missing.iter().zip(vectors) {
            let vector = normalize(v).map_err(|_| EmbeddingError::ZeroNorm(Some((*id).clone())))?;
            cached.insert(
                (*id).clone(),
                EmbeddingRecord {
                    item_id: (*id).clone(),
                    level,
                    dim,
                    vector,
                },
            );
        }
        if let Some(path) = cache_path {
            let mut all: Vec<EmbeddingRecord> = extra;
            let mut mine: Vec<EmbeddingRecord> = cached.values().cloned().collect();
            mine.sort_by(|a, b| a.item_id.cmp(&b.item_id));
            all.extend(mine);
            write_embedding_cache(path, &all)?;
        }
    }

    let vectors = documents
        .keys()
        .map(|id| (id.clone(), cached.remove(id).expect("every document embedded").vector))
        .collect();
    EmbeddingStore::from_vectors(dim, Some(level), vectors)
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicUsize, Ordering};

    use super::*;
    use crate::embedding::{norm, LocalHashEmbedder};

    struct Counting {
        inner: LocalHashEmbedder,
        calls: AtomicUsize,
    }

    impl EmbeddingProvider for Counting {
        fn name(&self) -> &str {
            "counting"
        }
        fn dim(&self) -> usize {
            self.inner.dim()
        }
        fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
            self.calls.fetch_add(texts.len(), Ordering::SeqCst);
            self.inner.embed(texts)
        }
    }

    fn docs() -> BTreeMap<ItemId, String> {
        [("1", "space opera epic"), ("2", "space opera epic"), ("3", "quiet village drama")]
            .into_iter()
            .map(|(id, t)| (ItemId::from(id), t.to_string()))
            .collect()
    }

    #[test]
    fn embeds_and_caches() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.jsonl");
        let p = Counting {
            inner: LocalHashEmbedder::new(64),
            calls: AtomicUsize::new(0),
        };
        let store = embed_catalog(&p, &docs(), ContentLevel::BASIC, Some(&path), false).unwrap();
        assert_eq!(store.len(), 3);
        for i in 0..3 {
            assert!((norm(store.row(i)) - 1.0).abs() < 1e-9);
        }
        assert_eq!(store.vector(&"1".into()), store.vector(&"2".into()));
        assert_eq!(p.calls.load(Ordering::SeqCst), 3);

        let again = embed_catalog(&p, &docs(), ContentLevel::BASIC, Some(&path), false).unwrap();
        assert_eq!(p.calls.load(Ordering::SeqCst), 3);
        assert_eq!(again.records(), store.records());

        embed_catalog(&p, &docs(), ContentLevel::BASIC, Some(&path), true).unwrap();
        assert_eq!(p.calls.load(Ordering::SeqCst), 6);
    }

    #[test]
    fn levels_share_a_cache_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.jsonl");
        let p = LocalHashEmbedder::new(16);
        embed_catalog(&p, &docs(), ContentLevel::BASIC, Some(&path), false).unwrap();
        embed_catalog(&p, &docs(), ContentLevel::PRUNED, Some(&path), false).unwrap();
        assert_eq!(read_embedding_cache(&path).unwrap().len(), 6);
    }

    #[test]
    fn failure_names_items() {
        let mut d = docs();
        d.insert("4".into(), "".into());
        let err = embed_catalog(&LocalHashEmbedder::new(8), &d, ContentLevel::BASIC, None, false).unwrap_err();
        match err {
            EmbeddingError::Provider { failed, .. } => assert_eq!(failed.len(), 4),
            e => panic!("unexpected {e}"),
        }
        assert!(matches!(
            embed_catalog(&LocalHashEmbedder::new(8), &BTreeMap::new(), ContentLevel::BASIC, None, false),
            Err(EmbeddingError::NoDocuments)
        ));
    }
}
