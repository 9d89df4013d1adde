//! Blocked, replicated experiments over factor grids and their reports.

mod config;
mod report;
mod resources;
mod runner;

use std::path::Path;

use thiserror::Error;

pub use config::{Cell, ClientConfig, Constants, DataPaths, EmbedderConfig, ExperimentConfig, Grid, Model, Schedule, Users};
pub use report::{
    aggregate, max_frequency, popularity_report, turn_series, write_report, write_summary, CellSummary, ItemFrequency,
    MetricMean, ReportFiles, TurnSeries, PLOT_DIR, POPULARITY_FILE, SUMMARY_FILE,
};
pub use resources::{content_level, embedding_provider, prepare_embeddings, prepare_splits, prepare_thresholds, Resources};
pub use runner::{
    load_transcripts, read_checkpoint, read_results, run_dir, run_experiment, session_log_path, session_seed,
    transcript_path, write_results, ExperimentOutcome, ResultRow, SessionRecord, CHECKPOINT_FILE, NMF_FILE, RESULTS_FILE,
    REVIEW_FILE,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment configuration: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
    #[error(transparent)]
    Embedding(#[from] crate::embedding::EmbeddingError),
    #[error(transparent)]
    Prompt(#[from] crate::prompts::PromptError),
    #[error(transparent)]
    Llm(#[from] crate::llm::LlmError),
    #[error(transparent)]
    Baseline(#[from] crate::baselines::BaselineError),
    #[error(transparent)]
    Session(crate::conversation::SessionError),
    #[error("{failed} of {total} sessions failed")]
    TooManyFailures { failed: usize, total: usize },
}

impl ExperimentError {
    pub(crate) fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        ExperimentError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }

    pub(crate) fn csv(path: &Path, e: csv::Error) -> Self {
        Self::io(path, e)
    }

    /// True for problems the user must fix before rerunning (bad config,
    /// missing credentials, unreadable inputs).
    pub fn is_configuration(&self) -> bool {
        match self {
            ExperimentError::TooManyFailures { .. } => false,
            ExperimentError::Session(e) => e.is_configuration(),
            ExperimentError::Llm(e) => e.is_configuration(),
            _ => true,
        }
    }
}
