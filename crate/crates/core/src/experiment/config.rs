use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::baselines::NmfConfig;
use crate::corpus::{SplitSize, UserSampling};
use crate::embedding::RemoteEmbedderConfig;
use crate::llm::{RemoteChatConfig, SimulatorConfig};
use crate::prompts::{PromptPopular, PromptStyle, SessionConfig};
use crate::UserId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    Llm,
    NmfItem,
    NmfUser,
    NmfItemLearned,
    NmfUserLearned,
    Random,
}

impl Model {
    pub fn as_str(self) -> &'static str {
        match self {
            Model::Llm => "llm",
            Model::NmfItem => "nmf-item",
            Model::NmfUser => "nmf-user",
            Model::NmfItemLearned => "nmf-item-learned",
            Model::NmfUserLearned => "nmf-user-learned",
            Model::Random => "random",
        }
    }

    pub fn needs_nmf(self) -> bool {
        matches!(
            self,
            Model::NmfItem | Model::NmfUser | Model::NmfItemLearned | Model::NmfUserLearned
        )
    }

    /// Judged in the learned item-factor space instead of content space.
    pub fn learned_judging(self) -> bool {
        matches!(self, Model::NmfItemLearned | Model::NmfUserLearned)
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub k: usize,
    pub p: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub prompt_style: Vec<PromptStyle>,
    pub schedule: Vec<Schedule>,
    pub temperature: Vec<f64>,
    pub prompt_popular: Vec<PromptPopular>,
    pub model: Vec<Model>,
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            prompt_style: vec![PromptStyle::Zero],
            schedule: vec![Schedule { k: 10, p: 5 }],
            temperature: vec![0.0],
            prompt_popular: vec![PromptPopular::Yes],
            model: vec![Model::Llm],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Constants {
    pub k_f: usize,
    pub example_size: SplitSize,
    pub eval_size: SplitSize,
    pub title_threshold: f64,
    pub q: f64,
    pub seed: u64,
    /// Latest release year the model may recommend; defaults to the newest
    /// year in the catalog.
    pub release_cutoff: Option<i32>,
    pub content_level: u8,
}

impl Default for Constants {
    fn default() -> Self {
        Self {
            k_f: 20,
            example_size: SplitSize::Count(10),
            eval_size: SplitSize::Fraction(0.33),
            title_threshold: 0.75,
            q: 0.99,
            seed: 22222,
            release_cutoff: None,
            content_level: 4,
        }
    }
}

/// Which users form the blocks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Users {
    Ids(Vec<UserId>),
    Sample(UserSampling),
}

impl Default for Users {
    fn default() -> Self {
        Users::Sample(UserSampling::default())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClientConfig {
    Simulated(#[serde(default)] SimulatorConfig),
    Remote(RemoteChatConfig),
}

impl Default for ClientConfig {
    fn default() -> Self {
        ClientConfig::Simulated(SimulatorConfig::default())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmbedderConfig {
    Local { dim: usize },
    Remote(RemoteEmbedderConfig),
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        EmbedderConfig::Local { dim: 256 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    pub ratings: PathBuf,
    pub items: PathBuf,
    pub supplement: Option<PathBuf>,
    /// Written by `ingest`; created on first run when absent.
    pub splits: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub thresholds: Option<PathBuf>,
    /// Directory of prompt template overrides.
    pub templates: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub data: DataPaths,
    pub output_dir: PathBuf,
    pub users: Users,
    pub replicates: usize,
    pub grid: Grid,
    pub constants: Constants,
    pub client: ClientConfig,
    pub embedding: EmbedderConfig,
    pub nmf: NmfConfig,
    /// Worker threads for sessions; 0 uses every core.
    pub parallelism: usize,
    /// Share of failed sessions above which the run counts as failed.
    pub max_failure_rate: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            data: DataPaths::default(),
            output_dir: PathBuf::from("runs"),
            users: Users::default(),
            replicates: 3,
            grid: Grid::default(),
            constants: Constants::default(),
            client: ClientConfig::default(),
            embedding: EmbedderConfig::default(),
            nmf: NmfConfig::default(),
            parallelism: 0,
            max_failure_rate: 0.1,
        }
    }
}

impl ExperimentConfig {
    /// Reads a JSON config; relative data paths resolve against the
    /// config file's directory.
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))?;
        let mut config: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))?;
        if let Some(base) = path.parent() {
            config.resolve_paths(base);
        }
        config.validate()?;
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() && !p.as_os_str().is_empty() {
                *p = base.join(&*p);
            }
        };
        let d = &mut self.data;
        fix(&mut d.ratings);
        fix(&mut d.items);
        for p in [&mut d.supplement, &mut d.splits, &mut d.embeddings, &mut d.thresholds, &mut d.templates]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        fix(&mut self.output_dir);
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: &str| Err(ExperimentError::Config(m.into()));
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return bad("name must be a non-empty path segment");
        }
        if self.replicates == 0 {
            return bad("replicates must be at least 1");
        }
        let g = &self.grid;
        if g.model.is_empty() {
            return bad("grid.model must not be empty");
        }
        if g.model.contains(&Model::Llm)
            && (g.prompt_style.is_empty() || g.schedule.is_empty() || g.temperature.is_empty() || g.prompt_popular.is_empty())
        {
            return bad("every llm grid factor needs at least one level");
        }
        if !(0.0..=1.0).contains(&self.max_failure_rate) {
            return bad("max_failure_rate must be within [0, 1]");
        }
        if let Users::Ids(ids) = &self.users {
            if ids.is_empty() {
                return bad("users.ids must not be empty");
            }
        }
        for cell in self.cells() {
            if let Some(s) = &cell.session {
                s.validate(None).map_err(|e| ExperimentError::Config(format!("cell {}: {e}", cell.key)))?;
            }
        }
        Ok(())
    }

    /// Factor cells in grid order. Baseline models get one cell each since
    /// the prompt factors do not apply to them.
    pub fn cells(&self) -> Vec<Cell> {
        let c = &self.constants;
        // an unset cutoff is filled in from the catalog by the runner
        let cutoff = c.release_cutoff.unwrap_or_default();
        let mut out = Vec::new();
        for &model in &self.grid.model {
            if model != Model::Llm {
                out.push(Cell {
                    key: model.as_str().to_string(),
                    model,
                    session: None,
                });
                continue;
            }
            for &style in &self.grid.prompt_style {
                for &Schedule { k, p } in &self.grid.schedule {
                    for &temperature in &self.grid.temperature {
                        for &prompt_popular in &self.grid.prompt_popular {
                            let key = format!(
                                "llm_{}_k{k}_p{p}_t{temperature}_pop-{}",
                                style.as_str(),
                                prompt_popular.as_str()
                            );
                            out.push(Cell {
                                key,
                                model,
                                session: Some(SessionConfig {
                                    k,
                                    k_f: c.k_f,
                                    p,
                                    prompt_style: style,
                                    release_cutoff: cutoff,
                                    prompt_popular,
                                    temperature,
                                    title_threshold: c.title_threshold,
                                    q: c.q,
                                    seed: c.seed,
                                }),
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

/// One combination of factor levels.
#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    /// Stable identifier; also the cell's directory name under the run.
    pub key: String,
    pub model: Model,
    /// Session template for LLM cells (seed and, when unset, release
    /// cutoff are replaced per run).
    pub session: Option<SessionConfig>,
}
