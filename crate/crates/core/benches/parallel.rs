//! Parallel vs sequential execution of the data-parallel hot paths.

use std::collections::BTreeMap;

use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};

use convrec::corpus::{catalog_documents, sample_users, split_users, ContentLevel, SplitSize, UserSampling};
use convrec::embedding::{build_quantile_index, embed_catalog, EmbeddingStore, LocalHashEmbedder};
use convrec::exec::Execution;
use convrec::experiment::{run_experiment, ExperimentConfig, Resources};
use convrec::synth::{generate, SynthConfig, SyntheticWorld};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn world(n_items: usize) -> SyntheticWorld {
    generate(&SynthConfig {
        n_items,
        n_clusters: n_items / 40,
        seed: 1,
        ..SynthConfig::default()
    })
}

fn store(w: &SyntheticWorld) -> EmbeddingStore {
    let level = ContentLevel::new(4).unwrap();
    let docs = catalog_documents(&w.catalog, level).unwrap();
    embed_catalog(&LocalHashEmbedder::new(256), &docs, level, None, false).unwrap()
}

fn quantile_index(c: &mut Criterion) {
    let mut group = c.benchmark_group("quantile_index");
    group.sample_size(10);
    for n in [500, 2000] {
        let s = store(&world(n));
        for (name, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(name, n), &s, |b, s| {
                b.iter(|| build_quantile_index(s, 0.99, exec).unwrap())
            });
        }
    }
    group.finish();
}

fn experiment(c: &mut Criterion) {
    let w = world(1000);
    let s = store(&w);
    let q = build_quantile_index(&s, 0.99, Execution::Parallel).unwrap();
    let rules = UserSampling {
        n: 8,
        lo_pct: 0.0,
        hi_pct: 100.0,
        min_total: 0,
        min_dislikes: 3,
    };
    let users = sample_users(&w.interactions, &rules, 1).unwrap();
    let splits: BTreeMap<_, _> =
        split_users(&w.interactions, &users, SplitSize::Count(10), SplitSize::Fraction(0.33), 1).unwrap();
    let res = Resources::new(w.catalog.clone(), w.interactions.clone(), splits, s, q);

    let mut group = c.benchmark_group("experiment");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(name, |b| {
            b.iter_batched(
                || {
                    let dir = tempfile::tempdir().unwrap();
                    let mut cfg = ExperimentConfig {
                        name: "bench".into(),
                        output_dir: dir.path().into(),
                        replicates: 2,
                        ..Default::default()
                    };
                    cfg.grid.temperature = vec![0.0, 1.0];
                    (dir, cfg)
                },
                |(dir, cfg)| {
                    let client = res.client(&cfg.client).unwrap();
                    let out = run_experiment(&cfg, &res, client.as_ref(), exec).unwrap();
                    drop(dir);
                    out.rows.len()
                },
                BatchSize::PerIteration,
            )
        });
    }
    group.finish();
}

criterion_group!(benches, quantile_index, experiment);
criterion_main!(benches);
