#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use convrec::corpus::{catalog_documents, sample_users, split_users, ContentLevel, SplitSize, UserSampling};
use convrec::embedding::{build_quantile_index, embed_catalog, LocalHashEmbedder};
use convrec::exec::Execution;
use convrec::experiment::{ExperimentConfig, Grid, Model, Resources, Schedule};
use convrec::llm::{ChatClient, ChatRequest, LlmError, SessionLog};
use convrec::prompts::{PromptPopular, PromptStyle};
use convrec::synth::{generate, SynthConfig, SyntheticWorld};

pub fn world(n_items: usize, n_clusters: usize, seed: u64) -> SyntheticWorld {
    generate(&SynthConfig {
        n_items,
        n_clusters,
        seed,
        ..SynthConfig::default()
    })
}

/// Resources over `world` with `n_users` sampled users.
pub fn resources(world: &SyntheticWorld, n_users: usize, seed: u64) -> Resources {
    let level = ContentLevel::new(4).unwrap();
    let docs = catalog_documents(&world.catalog, level).unwrap();
    let store = embed_catalog(&LocalHashEmbedder::new(256), &docs, level, None, false).unwrap();
    let quantiles = build_quantile_index(&store, 0.99, Execution::Parallel).unwrap();
    let rules = UserSampling {
        n: n_users,
        lo_pct: 0.0,
        hi_pct: 100.0,
        min_total: 0,
        min_dislikes: 3,
    };
    let users = sample_users(&world.interactions, &rules, seed).unwrap();
    let splits: BTreeMap<_, _> =
        split_users(&world.interactions, &users, SplitSize::Count(10), SplitSize::Fraction(0.33), seed).unwrap();
    Resources::new(world.catalog.clone(), world.interactions.clone(), splits, store, quantiles)
}

pub fn config(output: &Path, name: &str, seed: u64, replicates: usize, grid: Grid) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        name: name.into(),
        output_dir: output.into(),
        replicates,
        grid,
        ..Default::default()
    };
    cfg.constants.seed = seed;
    cfg
}

pub fn llm_grid(schedules: &[(usize, usize)], temperatures: &[f64], popular: &[PromptPopular]) -> Grid {
    Grid {
        prompt_style: vec![PromptStyle::Zero],
        schedule: schedules.iter().map(|&(k, p)| Schedule { k, p }).collect(),
        temperature: temperatures.to_vec(),
        prompt_popular: popular.to_vec(),
        model: vec![Model::Llm],
    }
}

/// Forwards to another client and counts calls.
pub struct Counting<'a> {
    pub inner: &'a dyn ChatClient,
    pub calls: AtomicUsize,
}

impl<'a> Counting<'a> {
    pub fn new(inner: &'a dyn ChatClient) -> Self {
        Self {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ChatClient for Counting<'_> {
    fn name(&self) -> &str {
        "counting"
    }

    fn complete(&self, request: &ChatRequest, log: &mut SessionLog) -> Result<String, LlmError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.complete(request, log)
    }
}

/// Fails every call for which `fail` returns an error.
pub struct FailWhen<'a> {
    pub inner: &'a dyn ChatClient,
    pub fail: Box<dyn Fn(&ChatRequest) -> Option<LlmError> + Send + Sync>,
}

impl ChatClient for FailWhen<'_> {
    fn name(&self) -> &str {
        "fail-when"
    }

    fn complete(&self, request: &ChatRequest, log: &mut SessionLog) -> Result<String, LlmError> {
        if let Some(e) = (self.fail)(request) {
            return Err(e);
        }
        self.inner.complete(request, log)
    }
}
