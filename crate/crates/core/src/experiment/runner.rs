use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::config::{Cell, ExperimentConfig, Model};
use super::resources::Resources;
use super::ExperimentError;
use crate::baselines::{
    nmf_item_recommend, nmf_train, nmf_user_recommend, random_recommend, training_interactions, BaselineError, NmfModel,
};
use crate::conversation::{final_report, run_session, RecommendationTurn, SessionContext, SessionTranscript};
use crate::corpus::{Interaction, UserSplit};
use crate::embedding::{EmbeddingStore, QuantileIndex};
use crate::exec::{map_slice, with_thread_limit, Execution};
use crate::hashing::derive_seed;
use crate::llm::ChatClient;
use crate::matching::{match_title, MatchMethod, MatchResult, UnmatchedLedger, REVIEW_MIN_COUNT};
use crate::metrics::{self, MetricsReport};
use crate::prompts::{PromptBuilder, PromptPopular, PromptStyle, SessionConfig, Templates};
use crate::relevancy::{Judge, RelevancyError};
use crate::{ItemId, UserId};

pub const CHECKPOINT_FILE: &str = "checkpoint.jsonl";
pub const RESULTS_FILE: &str = "results.csv";
pub const NMF_FILE: &str = "nmf.json";
pub const REVIEW_FILE: &str = "unmatched_review.csv";

/// One finished (or failed) session as stored in the checkpoint file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub cell: String,
    pub user_id: UserId,
    pub replicate: usize,
    pub seed: u64,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<MetricsReport>,
    /// Every matched recommendation slot of the session.
    #[serde(default)]
    pub recommendations: Vec<ItemId>,
    pub slots: usize,
}

impl SessionRecord {
    fn key(&self) -> (String, UserId, usize) {
        (self.cell.clone(), self.user_id.clone(), self.replicate)
    }
}

/// One line of `results.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub user_id: UserId,
    pub replicate: usize,
    pub cell: String,
    pub model: String,
    pub prompt_style: String,
    pub k: Option<usize>,
    pub p: Option<usize>,
    /// `k` and `p` combined, e.g. `k10p5`.
    pub config: String,
    pub temperature: Option<f64>,
    pub prompt_popular: String,
    pub status: String,
    pub precision: Option<f64>,
    pub ndcg: Option<f64>,
    pub map: Option<f64>,
    pub ils: Option<f64>,
    pub coverage: Option<f64>,
    pub novelty: Option<f64>,
    pub unmatched_ratio: Option<f64>,
    pub matched: Option<usize>,
    pub judged: Option<usize>,
    pub unmatched: Option<usize>,
    pub error: String,
}

impl ResultRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

pub struct ExperimentOutcome {
    pub rows: Vec<ResultRow>,
    /// Sessions executed by this call (not restored from the checkpoint).
    pub executed: usize,
    pub failed: usize,
    pub run_dir: PathBuf,
    pub max_failure_rate: f64,
}

impl ExperimentOutcome {
    pub fn failure_rate(&self) -> f64 {
        if self.rows.is_empty() {
            0.0
        } else {
            self.failed as f64 / self.rows.len() as f64
        }
    }

    /// Error when more sessions failed than the configured share allows.
    pub fn check(&self) -> Result<(), ExperimentError> {
        if self.failure_rate() > self.max_failure_rate {
            return Err(ExperimentError::TooManyFailures {
                failed: self.failed,
                total: self.rows.len(),
            });
        }
        Ok(())
    }
}

pub fn run_dir(config: &ExperimentConfig) -> PathBuf {
    config.output_dir.join(&config.name)
}

pub fn transcript_path(run_dir: &Path, cell: &str, user: &UserId, replicate: usize) -> PathBuf {
    run_dir.join(cell).join(user.as_str()).join(format!("{replicate}.jsonl"))
}

pub fn session_log_path(run_dir: &Path, cell: &str, user: &UserId, replicate: usize) -> PathBuf {
    run_dir.join(cell).join(user.as_str()).join(format!("{replicate}.log.jsonl"))
}

/// Seed of one session.
pub fn session_seed(experiment_seed: u64, user: &UserId, replicate: usize, cell: &str) -> u64 {
    derive_seed(experiment_seed, &[user.as_str(), &replicate.to_string(), cell])
}

pub fn read_checkpoint(path: &Path) -> Result<Vec<SessionRecord>, ExperimentError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let file = fs::File::open(path).map_err(|e| ExperimentError::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| ExperimentError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(r) => out.push(r),
            // a torn final line from an interrupted write is dropped
            Err(e) => tracing::warn!(line = n + 1, error = %e, "skipping unreadable checkpoint line"),
        }
    }
    Ok(out)
}

struct Learned {
    store: EmbeddingStore,
    quantiles: QuantileIndex,
}

/// Trains the NMF baseline, or reloads it when a checkpoint with the same
/// hyperparameters already sits in the run directory.
fn nmf_model(config: &ExperimentConfig, res: &Resources, dir: &Path) -> Result<NmfModel, ExperimentError> {
    let path = dir.join(NMF_FILE);
    let n = &config.nmf;
    if path.exists() {
        if let Ok(m) = NmfModel::read_json(&path) {
            let h = &m.header;
            if h.d == n.d && h.lambda == n.lambda && h.alpha == n.alpha && h.seed == n.seed && h.updates == n.updates {
                return Ok(m);
            }
        }
    }
    let train = training_interactions(&res.interactions, res.splits.values());
    let model = nmf_train(&train, n)?;
    model.write_json(&path)?;
    Ok(model)
}

/// Runs every (cell, user, replicate) not already in the checkpoint, then
/// writes `results.csv` and the unmatched-title review file.
pub fn run_experiment(
    config: &ExperimentConfig,
    res: &Resources,
    client: &dyn ChatClient,
    exec: Execution,
) -> Result<ExperimentOutcome, ExperimentError> {
    config.validate()?;
    let dir = run_dir(config);
    fs::create_dir_all(&dir).map_err(|e| ExperimentError::io(&dir, e))?;
    let cutoff = match config.constants.release_cutoff {
        Some(c) => c,
        None => res
            .catalog
            .max_year()
            .ok_or_else(|| ExperimentError::Config("catalog is empty".into()))?,
    };
    let mut cells = config.cells();
    for cell in &mut cells {
        if let Some(s) = &mut cell.session {
            s.release_cutoff = cutoff;
            s.validate(res.catalog.max_year())
                .map_err(|e| ExperimentError::Config(format!("cell {}: {e}", cell.key)))?;
        }
    }

    let nmf = if cells.iter().any(|c| c.model.needs_nmf()) {
        Some(nmf_model(config, res, &dir)?)
    } else {
        None
    };
    let learned = match &nmf {
        Some(m) if cells.iter().any(|c| c.model.learned_judging()) => {
            let (store, quantiles) = m.learned_space(config.constants.q, exec)?;
            Some(Learned { store, quantiles })
        }
        _ => None,
    };
    let templates = match &config.data.templates {
        Some(d) => Templates::with_overrides(d)?,
        None => Templates::default(),
    };
    let prompts = PromptBuilder::new(templates);

    let checkpoint_path = dir.join(CHECKPOINT_FILE);
    let mut done: BTreeMap<(String, UserId, usize), SessionRecord> = BTreeMap::new();
    for r in read_checkpoint(&checkpoint_path)? {
        if r.ok {
            done.insert(r.key(), r);
        }
    }
    let mut jobs = Vec::new();
    for cell in &cells {
        for user in res.splits.keys() {
            for replicate in 0..config.replicates {
                if !done.contains_key(&(cell.key.clone(), user.clone(), replicate)) {
                    jobs.push((cell, user, replicate));
                }
            }
        }
    }
    tracing::info!(pending = jobs.len(), restored = done.len(), "running sessions");

    let writer = Mutex::new(
        OpenOptions::new()
            .create(true)
            .append(true)
            .open(&checkpoint_path)
            .map_err(|e| ExperimentError::io(&checkpoint_path, e))?,
    );
    let stop = AtomicBool::new(false);
    let fatal: Mutex<Option<ExperimentError>> = Mutex::new(None);
    let runner = Runner {
        config,
        res,
        client,
        prompts: &prompts,
        nmf: nmf.as_ref(),
        learned: learned.as_ref(),
        dir: &dir,
    };
    let executed = with_thread_limit(config.parallelism, || {
        map_slice(exec, &jobs, |&(cell, user, replicate)| {
            if stop.load(Ordering::Relaxed) {
                return None;
            }
            let split = &res.splits[user];
            let record = match runner.run_one(cell, split, replicate) {
                Ok(r) => r,
                Err(JobError::Fatal(e)) => {
                    stop.store(true, Ordering::Relaxed);
                    fatal.lock().expect("fatal lock").get_or_insert(e);
                    return None;
                }
                Err(JobError::Failed(seed, message)) => SessionRecord {
                    cell: cell.key.clone(),
                    user_id: user.clone(),
                    replicate,
                    seed,
                    ok: false,
                    error: Some(message),
                    report: None,
                    recommendations: Vec::new(),
                    slots: 0,
                },
            };
            let line = serde_json::to_string(&record).expect("record serializes");
            let mut w = writer.lock().expect("checkpoint lock");
            if let Err(e) = writeln!(w, "{line}").and_then(|_| w.flush()) {
                stop.store(true, Ordering::Relaxed);
                fatal.lock().expect("fatal lock").get_or_insert(ExperimentError::io(&checkpoint_path, e));
            }
            Some(record)
        })
    });
    if let Some(e) = fatal.into_inner().expect("fatal lock") {
        return Err(e);
    }
    let executed: Vec<SessionRecord> = executed.into_iter().flatten().collect();
    let n_executed = executed.len();
    let mut failed_now: BTreeMap<(String, UserId, usize), SessionRecord> = BTreeMap::new();
    for r in executed {
        if r.ok {
            done.insert(r.key(), r);
        } else {
            failed_now.insert(r.key(), r);
        }
    }

    let rows = build_rows(&cells, &done, &failed_now);
    let failed = rows.iter().filter(|r| !r.is_ok()).count();
    write_results(&dir.join(RESULTS_FILE), &rows)?;
    write_review(&dir, &cells, &done)?;
    Ok(ExperimentOutcome {
        rows,
        executed: n_executed,
        failed,
        run_dir: dir,
        max_failure_rate: config.max_failure_rate,
    })
}

enum JobError {
    /// Stops the whole experiment (bad credentials, broken output dir).
    Fatal(ExperimentError),
    /// Marks this session failed; carries its seed.
    Failed(u64, String),
}

struct Runner<'a> {
    config: &'a ExperimentConfig,
    res: &'a Resources,
    client: &'a dyn ChatClient,
    prompts: &'a PromptBuilder,
    nmf: Option<&'a NmfModel>,
    learned: Option<&'a Learned>,
    dir: &'a Path,
}

impl Runner<'_> {
    fn ctx<'s>(&'s self, judge: Judge<'s>) -> SessionContext<'s> {
        SessionContext {
            catalog: &self.res.catalog,
            titles: &self.res.titles,
            content: &self.res.content,
            judge,
            prompts: self.prompts,
            ledger: None,
        }
    }

    fn run_one(&self, cell: &Cell, split: &UserSplit, replicate: usize) -> Result<SessionRecord, JobError> {
        let seed = session_seed(self.config.constants.seed, &split.user_id, replicate, &cell.key);
        let transcript = match &cell.session {
            Some(template) => self.run_llm(cell, template, split, replicate, seed)?,
            None => self.run_baseline(cell, split, replicate, seed)?,
        };
        let path = transcript_path(self.dir, &cell.key, &split.user_id, replicate);
        transcript.write_jsonl(&path).map_err(|e| JobError::Fatal(ExperimentError::io(&path, e)))?;
        let report = transcript
            .final_report
            .clone()
            .ok_or_else(|| JobError::Failed(seed, "session produced no final report".into()))?;
        Ok(SessionRecord {
            cell: cell.key.clone(),
            user_id: split.user_id.clone(),
            replicate,
            seed,
            ok: true,
            error: None,
            report: Some(report),
            recommendations: transcript.all_recommendations(),
            slots: transcript.slots(),
        })
    }

    fn run_llm(
        &self,
        cell: &Cell,
        template: &SessionConfig,
        split: &UserSplit,
        replicate: usize,
        seed: u64,
    ) -> Result<SessionTranscript, JobError> {
        let config = SessionConfig { seed, ..template.clone() };
        let ctx = self.ctx(Judge::new(&self.res.content, &self.res.quantiles));
        let outcome = run_session(split, &config, replicate, self.client, &ctx);
        let log_path = session_log_path(self.dir, &cell.key, &split.user_id, replicate);
        if let Some(dir) = log_path.parent() {
            fs::create_dir_all(dir).map_err(|e| JobError::Fatal(ExperimentError::io(dir, e)))?;
        }
        outcome
            .log
            .write_jsonl(&log_path)
            .map_err(|e| JobError::Fatal(ExperimentError::io(&log_path, e)))?;
        match outcome.error {
            None => Ok(outcome.transcript),
            Some(e) if e.is_configuration() => Err(JobError::Fatal(ExperimentError::Session(e))),
            Some(e) => {
                // keep the partial transcript for inspection
                let path = transcript_path(self.dir, &cell.key, &split.user_id, replicate);
                let _ = outcome.transcript.write_jsonl(&path);
                Err(JobError::Failed(seed, e.to_string()))
            }
        }
    }

    fn run_baseline(&self, cell: &Cell, split: &UserSplit, replicate: usize, seed: u64) -> Result<SessionTranscript, JobError> {
        let k_f = self.config.constants.k_f;
        let threshold = self.config.constants.title_threshold;
        let failed = |e: BaselineError| JobError::Failed(seed, e.to_string());
        let examples: HashSet<ItemId> = split.example_set.iter().map(|r| r.item_id.clone()).collect();
        let ids = match cell.model {
            Model::Random => random_recommend(&self.res.catalog, k_f, seed, &examples).map_err(failed)?,
            Model::NmfItem | Model::NmfItemLearned => {
                let space = self.nmf_space()?;
                nmf_item_recommend(&space, split, k_f).map_err(failed)?
            }
            Model::NmfUser | Model::NmfUserLearned => {
                let model = self.nmf.expect("NMF trained for NMF cells");
                let known: HashSet<ItemId> = split.example_set.iter().chain(&split.feedback_set).map(|r| r.item_id.clone()).collect();
                nmf_user_recommend(model, &split.user_id, k_f, &known).map_err(failed)?
            }
            Model::Llm => unreachable!("LLM cells carry a session config"),
        };
        // baselines emit catalog titles and go through the same matcher as model output
        let titles: Vec<String> = ids
            .iter()
            .map(|id| self.res.catalog.get(id).map_or_else(|| id.to_string(), |i| i.normalized_title.clone()))
            .collect();
        let matches: Vec<MatchResult> = titles
            .iter()
            .map(|t| match_title(t, &self.res.titles, threshold, None))
            .collect();
        let matched: Vec<ItemId> = matches.iter().filter_map(|m| m.matched_item.clone()).collect();
        let unmatched = matches.len() - matched.len();

        let (judge, split) = match (cell.model.learned_judging(), self.learned) {
            (true, Some(l)) => (Judge::new(&l.store, &l.quantiles), restrict_split(split, &l.store)),
            _ => (Judge::new(&self.res.content, &self.res.quantiles), split.clone()),
        };
        let ctx = self.ctx(judge);
        let relevancy = |e: RelevancyError| JobError::Failed(seed, e.to_string());
        let judgments = matched
            .iter()
            .map(|id| ctx.judge.judge(id, &split.evaluation_set))
            .collect::<Result<Vec<_>, _>>()
            .map_err(relevancy)?;
        let rel: Vec<bool> = judgments.iter().map(|j| j.relevant).collect();
        let report = final_report(&ctx, &judgments, &matched, &split.evaluation_set, unmatched, k_f).map_err(relevancy)?;
        let completion: String = titles.iter().enumerate().map(|(i, t)| format!("{}. {t}\n", i + 1)).collect();
        let turn = RecommendationTurn {
            turn_index: 1,
            requested: k_f,
            prompt_text: String::new(),
            completion_text: completion,
            extraction_retried: false,
            extracted_titles: titles,
            matches,
            judgments,
            precision: metrics::precision(&rel),
            coverage_feedback: metrics::coverage(&ctx.judge, &matched, &split.feedback_set).map_err(relevancy)?,
            coverage_evaluation: report.coverage,
        };
        Ok(SessionTranscript {
            user_id: split.user_id.clone(),
            replicate,
            config: baseline_session_config(self.config, seed),
            turns: vec![turn],
            final_report: Some(report),
            aborted: None,
        })
    }

    fn nmf_space(&self) -> Result<EmbeddingStore, JobError> {
        let model = self.nmf.expect("NMF trained for NMF cells");
        if let Some(l) = self.learned {
            return Ok(l.store.clone());
        }
        model
            .learned_item_store()
            .map_err(|e| JobError::Fatal(ExperimentError::Baseline(e)))
    }
}

/// Session parameters recorded in a baseline transcript: one turn of `k_f`.
fn baseline_session_config(config: &ExperimentConfig, seed: u64) -> SessionConfig {
    let c = &config.constants;
    SessionConfig {
        k: c.k_f,
        k_f: c.k_f,
        p: 1,
        prompt_style: PromptStyle::Zero,
        release_cutoff: c.release_cutoff.unwrap_or_default(),
        prompt_popular: PromptPopular::Yes,
        temperature: 0.0,
        title_threshold: c.title_threshold,
        q: c.q,
        seed,
    }
}

/// Drops held interactions whose item has no row in `store`.
fn restrict_split(split: &UserSplit, store: &EmbeddingStore) -> UserSplit {
    let keep = |v: &[Interaction]| v.iter().filter(|r| store.contains(&r.item_id)).cloned().collect();
    UserSplit {
        user_id: split.user_id.clone(),
        example_set: keep(&split.example_set),
        feedback_set: keep(&split.feedback_set),
        evaluation_set: keep(&split.evaluation_set),
    }
}

/// Rows for every cell, user and replicate that has a record, sorted; cell
/// novelty is computed over the cell's successful sessions.
fn build_rows(
    cells: &[Cell],
    done: &BTreeMap<(String, UserId, usize), SessionRecord>,
    failed: &BTreeMap<(String, UserId, usize), SessionRecord>,
) -> Vec<ResultRow> {
    let mut rows = Vec::new();
    for cell in cells {
        let ok: Vec<&SessionRecord> = done.values().filter(|r| r.cell == cell.key).collect();
        let sessions: Vec<&[ItemId]> = ok.iter().map(|r| r.recommendations.as_slice()).collect();
        let popularity = metrics::popularity_table(&sessions);
        for r in ok {
            let mut report = r.report.clone().unwrap_or_default();
            report.novelty = Some(metrics::novelty(&r.recommendations, r.slots, &popularity));
            rows.push(row(cell, r, Some(&report)));
        }
        for r in failed.values().filter(|r| r.cell == cell.key) {
            rows.push(row(cell, r, None));
        }
    }
    rows.sort_by(|a, b| (&a.cell, &a.user_id, a.replicate).cmp(&(&b.cell, &b.user_id, b.replicate)));
    rows
}

fn row(cell: &Cell, r: &SessionRecord, report: Option<&MetricsReport>) -> ResultRow {
    let s = cell.session.as_ref();
    ResultRow {
        user_id: r.user_id.clone(),
        replicate: r.replicate,
        cell: cell.key.clone(),
        model: cell.model.to_string(),
        prompt_style: s.map(|s| s.prompt_style.as_str().to_string()).unwrap_or_default(),
        k: s.map(|s| s.k),
        p: s.map(|s| s.p),
        config: s.map(|s| format!("k{}p{}", s.k, s.p)).unwrap_or_default(),
        temperature: s.map(|s| s.temperature),
        prompt_popular: s.map(|s| s.prompt_popular.as_str().to_string()).unwrap_or_default(),
        status: if report.is_some() { "ok" } else { "failed" }.to_string(),
        precision: report.and_then(|m| m.precision),
        ndcg: report.and_then(|m| m.ndcg),
        map: report.and_then(|m| m.map),
        ils: report.and_then(|m| m.ils),
        coverage: report.and_then(|m| m.coverage),
        novelty: report.and_then(|m| m.novelty),
        unmatched_ratio: report.map(|m| m.unmatched_ratio),
        matched: report.map(|m| m.matched),
        judged: report.map(|m| m.judged),
        unmatched: report.map(|m| m.unmatched),
        error: r.error.clone().unwrap_or_default(),
    }
}

pub fn write_results(path: &Path, rows: &[ResultRow]) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| ExperimentError::csv(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| ExperimentError::csv(path, e))?;
    }
    w.flush().map_err(|e| ExperimentError::io(path, e))
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>, ExperimentError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| ExperimentError::csv(path, e))?;
    r.deserialize()
        .collect::<Result<Vec<ResultRow>, _>>()
        .map_err(|e| ExperimentError::csv(path, e))
}

/// Unmatched titles of every completed session, read back from the
/// transcripts so the file does not depend on resume history.
fn write_review(
    dir: &Path,
    cells: &[Cell],
    done: &BTreeMap<(String, UserId, usize), SessionRecord>,
) -> Result<(), ExperimentError> {
    let ledger = UnmatchedLedger::default();
    let keys: HashSet<&str> = cells.iter().map(|c| c.key.as_str()).collect();
    for r in done.values().filter(|r| keys.contains(r.cell.as_str())) {
        let path = transcript_path(dir, &r.cell, &r.user_id, r.replicate);
        let Ok(t) = SessionTranscript::read_jsonl(&path) else {
            continue;
        };
        for m in t.turns.iter().flat_map(|t| &t.matches) {
            if m.method == MatchMethod::Unmatched {
                ledger.record(&m.raw_title);
            }
        }
    }
    let path = dir.join(REVIEW_FILE);
    ledger
        .write_review_csv(&path, REVIEW_MIN_COUNT)
        .map_err(|e| ExperimentError::io(&path, e))
}

/// Completed sessions' transcripts for the given cells, in sorted order.
pub fn load_transcripts(
    dir: &Path,
    rows: &[ResultRow],
) -> Result<HashMap<String, Vec<SessionTranscript>>, ExperimentError> {
    let mut out: HashMap<String, Vec<SessionTranscript>> = HashMap::new();
    for r in rows.iter().filter(|r| r.is_ok()) {
        let path = transcript_path(dir, &r.cell, &r.user_id, r.replicate);
        let t = SessionTranscript::read_jsonl(&path).map_err(|e| ExperimentError::io(&path, e))?;
        out.entry(r.cell.clone()).or_default().push(t);
    }
    Ok(out)
}
