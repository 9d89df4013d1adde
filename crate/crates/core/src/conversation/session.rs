use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::extract_titles;
use crate::corpus::{Catalog, Interaction, UserSplit};
use crate::embedding::EmbeddingStore;
use crate::hashing::derive_seed;
use crate::ids::{ItemId, UserId};
use crate::llm::{ChatClient, ChatMessage, ChatRequest, LlmError, SessionLog};
use crate::matching::{match_title, MatchResult, TitleIndex, UnmatchedLedger};
use crate::metrics::{self, MetricsReport};
use crate::prompts::{build_synthetic_example, PromptBuilder, PromptError, SessionConfig};
use crate::relevancy::{Judge, RelevanceJudgment, RelevancyError};

pub const EXTRACTION_RETRY_SUFFIX: &str = "Respond only with a numbered list.";

#[derive(Debug, Error)]
pub enum SessionError {
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Relevancy(#[from] RelevancyError),
    #[error("turn {turn}: {message}")]
    Extraction { turn: usize, message: String },
}

impl SessionError {
    pub fn is_configuration(&self) -> bool {
        match self {
            SessionError::Llm(e) => e.is_configuration(),
            SessionError::Prompt(_) => true,
            _ => false,
        }
    }
}

/// Read-only state shared by every session of an experiment.
#[derive(Clone, Copy)]
pub struct SessionContext<'a> {
    pub catalog: &'a Catalog,
    pub titles: &'a TitleIndex,
    /// Content embeddings: demonstrations and intra-list similarity.
    pub content: &'a EmbeddingStore,
    /// Similarity space used to judge relevance and coverage.
    pub judge: Judge<'a>,
    pub prompts: &'a PromptBuilder,
    pub ledger: Option<&'a UnmatchedLedger>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecommendationTurn {
    pub turn_index: usize,
    pub requested: usize,
    pub prompt_text: String,
    pub completion_text: String,
    #[serde(default)]
    pub extraction_retried: bool,
    pub extracted_titles: Vec<String>,
    pub matches: Vec<MatchResult>,
    pub judgments: Vec<RelevanceJudgment>,
    pub precision: Option<f64>,
    /// Coverage of the feedback set by all recommendations so far.
    pub coverage_feedback: Option<f64>,
    /// Coverage of the evaluation set by all recommendations so far.
    pub coverage_evaluation: Option<f64>,
}

impl RecommendationTurn {
    pub fn matched_items(&self) -> impl Iterator<Item = &ItemId> {
        self.matches.iter().filter_map(|m| m.matched_item.as_ref())
    }

    pub fn unmatched_count(&self) -> usize {
        self.matches.iter().filter(|m| m.matched_item.is_none()).count()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionTranscript {
    pub user_id: UserId,
    pub replicate: usize,
    pub config: SessionConfig,
    pub turns: Vec<RecommendationTurn>,
    pub final_report: Option<MetricsReport>,
    pub aborted: Option<String>,
}

impl SessionTranscript {
    /// Every matched recommendation across turns, one entry per slot.
    pub fn all_recommendations(&self) -> Vec<ItemId> {
        self.turns.iter().flat_map(|t| t.matched_items().cloned()).collect()
    }

    pub fn slots(&self) -> usize {
        metrics::slot_count(self.config.k, self.config.p, self.config.k_f)
    }

    pub fn is_complete(&self) -> bool {
        self.aborted.is_none() && self.final_report.is_some()
    }

    pub fn prompts(&self) -> impl Iterator<Item = &str> {
        self.turns.iter().map(|t| t.prompt_text.as_str())
    }

    /// One JSON object per turn; the last carries the final report.
    pub fn write_jsonl(&self, path: &Path) -> std::io::Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let mut w = BufWriter::new(fs::File::create(path)?);
        let n = self.turns.len();
        for (i, turn) in self.turns.iter().enumerate() {
            let last = i + 1 == n;
            let line = TranscriptLine {
                user_id: self.user_id.clone(),
                replicate: self.replicate,
                config: (i == 0).then(|| self.config.clone()),
                turn: turn.clone(),
                final_report: if last { self.final_report.clone() } else { None },
                aborted: if last { self.aborted.clone() } else { None },
            };
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }

    pub fn read_jsonl(path: &Path) -> std::io::Result<Self> {
        let file = fs::File::open(path)?;
        let mut lines = Vec::new();
        for line in BufReader::new(file).lines() {
            let line = line?;
            if !line.trim().is_empty() {
                let l: TranscriptLine = serde_json::from_str(&line).map_err(std::io::Error::other)?;
                lines.push(l);
            }
        }
        let first = lines.first().ok_or_else(|| std::io::Error::other("empty transcript"))?;
        let config = first.config.clone().ok_or_else(|| std::io::Error::other("transcript has no config"))?;
        let (user_id, replicate) = (first.user_id.clone(), first.replicate);
        let last = lines.last().expect("nonempty");
        let (final_report, aborted) = (last.final_report.clone(), last.aborted.clone());
        Ok(Self {
            user_id,
            replicate,
            config,
            turns: lines.into_iter().map(|l| l.turn).collect(),
            final_report,
            aborted,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct TranscriptLine {
    user_id: UserId,
    replicate: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config: Option<SessionConfig>,
    #[serde(flatten)]
    turn: RecommendationTurn,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    final_report: Option<MetricsReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    aborted: Option<String>,
}

/// Transcript plus the client log; `error` is set when the session stopped
/// early, in which case the transcript holds the completed turns.
pub struct SessionOutcome {
    pub transcript: SessionTranscript,
    pub log: SessionLog,
    pub error: Option<SessionError>,
}

/// Requested recommendation count for 1-based `turn`.
pub fn requested_count(config: &SessionConfig, turn: usize) -> usize {
    if turn >= config.p {
        config.k_f
    } else {
        config.k
    }
}

fn chat_request<'m>(config: &SessionConfig, messages: &'m [ChatMessage], turn: usize) -> ChatRequest<'m> {
    ChatRequest {
        messages,
        temperature: config.temperature,
        seed: config.seed,
        turn,
    }
}

fn judge_all(judge: &Judge, items: &[ItemId], reference: &[Interaction]) -> Result<Vec<RelevanceJudgment>, RelevancyError> {
    items.iter().map(|id| judge.judge(id, reference)).collect()
}

/// Scores a final list against the evaluation set. `all_recs` is every
/// matched slot of the session.
pub fn final_report(
    ctx: &SessionContext,
    final_judgments: &[RelevanceJudgment],
    all_recs: &[ItemId],
    evaluation: &[Interaction],
    unmatched_total: usize,
    slots: usize,
) -> Result<MetricsReport, RelevancyError> {
    let rel: Vec<bool> = final_judgments.iter().map(|j| j.relevant).collect();
    let final_ids: Vec<ItemId> = final_judgments.iter().map(|j| j.item_id.clone()).collect();
    Ok(MetricsReport {
        precision: metrics::precision(&rel),
        ndcg: metrics::ndcg(&rel),
        map: metrics::average_precision(&rel),
        ils: metrics::ils(ctx.content, &final_ids)?,
        coverage: metrics::coverage(&ctx.judge, all_recs, evaluation)?,
        novelty: None,
        unmatched_ratio: metrics::unmatched_ratio(unmatched_total, slots),
        matched: all_recs.len(),
        judged: final_judgments.len(),
        unmatched: unmatched_total,
    })
}

struct Feedback {
    good: Vec<String>,
    bad: Vec<String>,
}

/// Liked / disliked titles from a judged turn. Items from the evaluation set
/// are never named, and each title appears once.
fn feedback_from(ctx: &SessionContext, judgments: &[RelevanceJudgment], hidden: &HashSet<&ItemId>) -> Feedback {
    let mut seen = HashSet::new();
    let mut fb = Feedback {
        good: Vec::new(),
        bad: Vec::new(),
    };
    for j in judgments {
        if hidden.contains(&j.item_id) || !seen.insert(&j.item_id) {
            continue;
        }
        let title = ctx.catalog.title_of(&j.item_id).unwrap_or(j.item_id.as_str()).to_string();
        if j.relevant {
            fb.good.push(title);
        } else {
            fb.bad.push(title);
        }
    }
    fb
}

/// Runs one conversation: initial prompt, `p − 1` feedback turns (the last
/// of which requests the final list), and evaluation against the user's
/// evaluation set.
pub fn run_session(
    split: &UserSplit,
    config: &SessionConfig,
    replicate: usize,
    client: &dyn ChatClient,
    ctx: &SessionContext,
) -> SessionOutcome {
    let mut transcript = SessionTranscript {
        user_id: split.user_id.clone(),
        replicate,
        config: config.clone(),
        turns: Vec::new(),
        final_report: None,
        aborted: None,
    };
    let mut log = SessionLog::default();
    let error = run_turns(split, config, client, ctx, &mut transcript, &mut log).err();
    if let Some(e) = &error {
        tracing::warn!(user = %split.user_id, replicate, error = %e, "session aborted");
        transcript.aborted = Some(e.to_string());
    }
    SessionOutcome { transcript, log, error }
}

fn run_turns(
    split: &UserSplit,
    config: &SessionConfig,
    client: &dyn ChatClient,
    ctx: &SessionContext,
    transcript: &mut SessionTranscript,
    log: &mut SessionLog,
) -> Result<(), SessionError> {
    let hidden: HashSet<&ItemId> = split.evaluation_set.iter().map(|i| &i.item_id).collect();
    let examples: Vec<(String, bool)> = split
        .example_set
        .iter()
        .map(|i| (ctx.catalog.title_of(&i.item_id).unwrap_or(i.item_id.as_str()).to_string(), i.is_positive()))
        .collect();
    let synthetic = if config.prompt_style.needs_demonstration() {
        let exclude: HashSet<ItemId> = split.known_items().chain(hidden.iter().copied()).cloned().collect();
        Some(build_synthetic_example(
            ctx.catalog,
            ctx.content,
            split.example_set.len().max(1),
            config.initial_count(),
            derive_seed(config.seed, &["demonstration"]),
            config.prompt_style,
            &exclude,
            Some(config.release_cutoff),
        )?)
    } else {
        None
    };

    let mut messages: Vec<ChatMessage> = Vec::new();
    let mut feedback = Feedback {
        good: Vec::new(),
        bad: Vec::new(),
    };
    let mut cumulative: Vec<ItemId> = Vec::new();
    let mut unmatched_total = 0;
    for turn in 1..=config.p {
        let requested = requested_count(config, turn);
        let is_final = turn == config.p;
        let prompt = if turn == 1 {
            ctx.prompts.initial(config, &examples, synthetic.as_ref())?
        } else if is_final {
            ctx.prompts.final_turn(config, &feedback.good, &feedback.bad)?
        } else {
            ctx.prompts.reprompt(config, &feedback.good, &feedback.bad, requested)?
        };
        messages.push(ChatMessage::user(prompt));
        let mut completion = client.complete(&chat_request(config, &messages, turn), log)?;
        let mut retried = false;
        let titles = match extract_titles(&completion) {
            Ok(t) => t,
            Err(_) => {
                retried = true;
                let last = messages.last_mut().expect("prompt pushed");
                last.content = format!("{}\n\n{EXTRACTION_RETRY_SUFFIX}", last.content);
                completion = client.complete(&chat_request(config, &messages, turn), log)?;
                extract_titles(&completion).map_err(|e| SessionError::Extraction {
                    turn,
                    message: e.to_string(),
                })?
            }
        };
        let titles: Vec<String> = titles.into_iter().take(requested).collect();
        let matches: Vec<MatchResult> = titles
            .iter()
            .map(|t| match_title(t, ctx.titles, config.title_threshold, ctx.ledger))
            .collect();
        let matched: Vec<ItemId> = matches.iter().filter_map(|m| m.matched_item.clone()).collect();
        unmatched_total += matches.len() - matched.len();
        cumulative.extend(matched.iter().cloned());

        let reference = if is_final {
            &split.evaluation_set
        } else {
            &split.feedback_set
        };
        let judgments = judge_all(&ctx.judge, &matched, reference)?;
        let rel: Vec<bool> = judgments.iter().map(|j| j.relevant).collect();
        let turn_record = RecommendationTurn {
            turn_index: turn,
            requested,
            prompt_text: messages.last().expect("prompt").content.clone(),
            completion_text: completion.clone(),
            extraction_retried: retried,
            extracted_titles: titles,
            matches,
            judgments: judgments.clone(),
            precision: metrics::precision(&rel),
            coverage_feedback: metrics::coverage(&ctx.judge, &cumulative, &split.feedback_set)?,
            coverage_evaluation: metrics::coverage(&ctx.judge, &cumulative, &split.evaluation_set)?,
        };
        transcript.turns.push(turn_record);
        messages.push(ChatMessage::assistant(completion));

        if is_final {
            transcript.final_report = Some(final_report(
                ctx,
                &judgments,
                &cumulative,
                &split.evaluation_set,
                unmatched_total,
                transcript.slots(),
            )?);
        } else {
            feedback = feedback_from(ctx, &judgments, &hidden);
        }
    }
    Ok(())
}

/// Scores a ready-made ranked list (a baseline's output) as if it were the
/// final list of a single-turn session.
pub fn evaluate_list(
    split: &UserSplit,
    list: &[ItemId],
    ctx: &SessionContext,
) -> Result<MetricsReport, RelevancyError> {
    let judgments = judge_all(&ctx.judge, list, &split.evaluation_set)?;
    final_report(ctx, &judgments, list, &split.evaluation_set, 0, list.len().max(1))
}

/// Occurrences of any of `titles` inside `texts`, matched on word
/// boundaries. Returns `(text index, title)` pairs.
pub fn scan_for_titles<'t, S: AsRef<str>>(texts: &[S], titles: &'t [String]) -> Vec<(usize, &'t str)> {
    let mut hits = Vec::new();
    for (i, text) in texts.iter().enumerate() {
        let text = text.as_ref();
        for title in titles {
            let mut from = 0;
            while let Some(pos) = text[from..].find(title.as_str()) {
                let start = from + pos;
                let end = start + title.len();
                let before_ok = text[..start].chars().next_back().is_none_or(|c| !c.is_alphanumeric());
                let after_ok = text[end..].chars().next().is_none_or(|c| !c.is_alphanumeric());
                if before_ok && after_ok {
                    hits.push((i, title.as_str()));
                    break;
                }
                from = start + title.chars().next().map_or(1, char::len_utf8);
            }
        }
    }
    hits
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;
    use std::sync::Arc;

    use super::*;
    use crate::corpus::{catalog_documents, item_interaction_counts, sample_users, split_users, ContentLevel, SplitSize, UserSampling};
    use crate::embedding::{build_quantile_index, embed_catalog, LocalHashEmbedder, QuantileIndex};
    use crate::exec::Execution;
    use crate::llm::{SimulatedRecommender, SimulatorConfig};
    use crate::prompts::{test_config, PromptStyle};
    use crate::synth::{generate, SynthConfig};

    struct World {
        catalog: Arc<Catalog>,
        store: Arc<EmbeddingStore>,
        quantiles: QuantileIndex,
        titles: TitleIndex,
        splits: Vec<UserSplit>,
        counts: HashMap<ItemId, usize>,
    }

    fn world() -> World {
        let w = generate(&SynthConfig {
            n_items: 200,
            n_clusters: 10,
            n_users: 30,
            min_ratings: 50,
            max_ratings: 90,
            ..SynthConfig::default()
        });
        let docs = catalog_documents(&w.catalog, ContentLevel::PRUNED).unwrap();
        let store = embed_catalog(&LocalHashEmbedder::new(256), &docs, ContentLevel::PRUNED, None, false).unwrap();
        let quantiles = build_quantile_index(&store, 0.99, Execution::Sequential).unwrap();
        let rules = UserSampling {
            n: 3,
            lo_pct: 0.0,
            hi_pct: 100.0,
            min_total: 0,
            min_dislikes: 0,
        };
        let users = sample_users(&w.interactions, &rules, 1).unwrap();
        let splits = split_users(&w.interactions, &users, SplitSize::Count(10), SplitSize::Fraction(0.33), 1)
            .unwrap()
            .into_values()
            .collect();
        World {
            titles: TitleIndex::from_catalog(&w.catalog),
            counts: item_interaction_counts(&w.interactions),
            catalog: Arc::new(w.catalog),
            store: Arc::new(store),
            quantiles,
            splits,
        }
    }

    fn ctx<'a>(w: &'a World, prompts: &'a PromptBuilder, ledger: Option<&'a UnmatchedLedger>) -> SessionContext<'a> {
        SessionContext {
            catalog: &w.catalog,
            titles: &w.titles,
            content: &w.store,
            judge: Judge::new(&w.store, &w.quantiles),
            prompts,
            ledger,
        }
    }

    fn client(w: &World, typo_rate: f64) -> SimulatedRecommender {
        SimulatedRecommender::new(
            w.catalog.clone(),
            w.store.clone(),
            &w.counts,
            SimulatorConfig {
                typo_rate,
                ..SimulatorConfig::default()
            },
        )
    }

    fn cfg(style: PromptStyle, k: usize, p: usize) -> SessionConfig {
        let mut c = test_config(style);
        c.k = k;
        c.p = p;
        c
    }

    #[test]
    fn turn_schedule_and_report() {
        let w = world();
        let prompts = PromptBuilder::default();
        let sim = client(&w, 0.0);
        for (k, p) in [(10, 5), (20, 1), (5, 3)] {
            let config = cfg(PromptStyle::Zero, k, p);
            let out = run_session(&w.splits[0], &config, 0, &sim, &ctx(&w, &prompts, None));
            assert!(out.error.is_none(), "{:?}", out.error);
            let t = &out.transcript;
            assert_eq!(t.turns.len(), p);
            let requested: Vec<usize> = t.turns.iter().map(|t| t.requested).collect();
            let mut want = vec![k; p - 1];
            want.push(20);
            assert_eq!(requested, want);
            assert_eq!(t.slots(), k * (p - 1) + 20);
            let r = t.final_report.as_ref().unwrap();
            assert_eq!(r.judged, 20);
            for v in [r.precision, r.ndcg, r.map, r.ils, r.coverage].into_iter().flatten() {
                assert!((0.0..=1.0 + 1e-12).contains(&v));
            }
            // cumulative coverage never shrinks
            for pair in t.turns.windows(2) {
                assert!(pair[1].coverage_evaluation >= pair[0].coverage_evaluation);
                assert!(pair[1].coverage_feedback >= pair[0].coverage_feedback);
            }
        }
    }

    #[test]
    fn feedback_names_only_previous_judgments_and_hides_evaluation_items() {
        let w = world();
        let prompts = PromptBuilder::default();
        let sim = client(&w, 0.0);
        for split in &w.splits {
            for style in [PromptStyle::Zero, PromptStyle::Few, PromptStyle::Cot] {
                let out = run_session(split, &cfg(style, 10, 4), 0, &sim, &ctx(&w, &prompts, None));
                let t = out.transcript;
                let hidden: Vec<String> = split
                    .evaluation_set
                    .iter()
                    .map(|i| w.catalog.title_of(&i.item_id).unwrap().to_string())
                    .collect();
                let prompts_text: Vec<&str> = t.prompts().collect();
                assert!(scan_for_titles(&prompts_text, &hidden).is_empty());
                for pair in t.turns.windows(2) {
                    let judged: HashSet<String> = pair[0]
                        .judgments
                        .iter()
                        .map(|j| w.catalog.title_of(&j.item_id).unwrap().to_string())
                        .collect();
                    for line in pair[1].prompt_text.lines().filter(|l| l.starts_with("- ")) {
                        assert!(judged.contains(&line[2..]), "{line}");
                    }
                }
            }
        }
    }

    #[test]
    fn deterministic_transcripts() {
        let w = world();
        let prompts = PromptBuilder::default();
        let sim = client(&w, 0.1);
        let mut c = cfg(PromptStyle::Cot, 10, 3);
        c.temperature = 0.7;
        let a = run_session(&w.splits[1], &c, 2, &sim, &ctx(&w, &prompts, None));
        assert!(a.error.is_none(), "{:?}", a.error);
        let a = a.transcript;
        let b = run_session(&w.splits[1], &c, 2, &sim, &ctx(&w, &prompts, None)).transcript;
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x/0.jsonl");
        a.write_jsonl(&path).unwrap();
        assert_eq!(SessionTranscript::read_jsonl(&path).unwrap(), a);
        assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 3);
    }

    #[test]
    fn typos_still_match_and_misses_are_counted() {
        let w = world();
        let prompts = PromptBuilder::default();
        let ledger = UnmatchedLedger::new();
        let sim = client(&w, 1.0);
        let out = run_session(&w.splits[0], &cfg(PromptStyle::Zero, 10, 3), 0, &sim, &ctx(&w, &prompts, Some(&ledger)));
        let t = out.transcript;
        let fuzzy = t.turns.iter().flat_map(|t| &t.matches).filter(|m| m.method == crate::matching::MatchMethod::Fuzzy).count();
        assert!(fuzzy > 30, "{fuzzy}");
        let r = t.final_report.unwrap();
        assert_eq!(r.unmatched as u64, ledger.total());
        assert!((r.unmatched_ratio - r.unmatched as f64 / 40.0).abs() < 1e-12);
    }

    struct Scripted(std::sync::Mutex<Vec<Result<String, LlmError>>>);

    impl ChatClient for Scripted {
        fn name(&self) -> &str {
            "scripted"
        }
        fn complete(&self, _r: &ChatRequest, _l: &mut SessionLog) -> Result<String, LlmError> {
            self.0.lock().unwrap().remove(0)
        }
    }

    #[test]
    fn extraction_retry_then_abort() {
        let w = world();
        let prompts = PromptBuilder::default();
        let title = w.catalog.items()[0].normalized_title.clone();
        let ok = format!("1. {title}\n2. Not A Real Film (1900)");
        let script = Scripted(std::sync::Mutex::new(vec![
            Ok("Sure, happy to help!".into()),
            Ok(ok.clone()),
            Ok("no list".into()),
            Ok("still no list".into()),
        ]));
        let out = run_session(&w.splits[0], &cfg(PromptStyle::Zero, 2, 3), 0, &script, &ctx(&w, &prompts, None));
        let t = &out.transcript;
        assert!(matches!(out.error, Some(SessionError::Extraction { turn: 2, .. })));
        assert_eq!(t.turns.len(), 1);
        assert!(t.turns[0].extraction_retried);
        assert!(t.turns[0].prompt_text.ends_with(EXTRACTION_RETRY_SUFFIX));
        assert_eq!(t.turns[0].unmatched_count(), 1);
        assert!(t.aborted.is_some() && t.final_report.is_none());

        let failing = Scripted(std::sync::Mutex::new(vec![Err(LlmError::Auth("401".into()))]));
        let out = run_session(&w.splits[0], &cfg(PromptStyle::Zero, 2, 3), 0, &failing, &ctx(&w, &prompts, None));
        assert!(out.error.unwrap().is_configuration());
    }

    #[test]
    fn duplicates_are_judged_each_time_but_cover_once() {
        let w = world();
        let prompts = PromptBuilder::default();
        let split = &w.splits[0];
        let target = &split.evaluation_set[0].item_id;
        let title = w.catalog.title_of(target).unwrap();
        let text = format!("1. {title}\n2. {title}");
        let script = Scripted(std::sync::Mutex::new(vec![Ok(text)]));
        let mut c = cfg(PromptStyle::Zero, 2, 1);
        c.k_f = 2;
        let out = run_session(split, &c, 0, &script, &ctx(&w, &prompts, None));
        let t = out.transcript;
        assert_eq!(t.turns[0].judgments.len(), 2);
        let r = t.final_report.unwrap();
        let judge = Judge::new(&w.store, &w.quantiles);
        let once = metrics::coverage(&judge, std::slice::from_ref(target), &split.evaluation_set).unwrap();
        assert_eq!(r.coverage, once);
        assert_eq!(r.matched, 2);
    }

    #[test]
    fn word_boundary_scan() {
        let titles = vec!["Up (2009)".to_string(), "Heat (1995)".to_string()];
        let texts = ["- SetUp (2009) [liked]", "Cheat (1995)", "- Heat (1995)"];
        assert_eq!(scan_for_titles(&texts, &titles), vec![(2, "Heat (1995)")]);
    }
}
