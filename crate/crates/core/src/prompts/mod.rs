//! Conversation text: initial prompts in three styles, feedback reprompts,
//! and the final-list request.

mod synthetic;
mod templates;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use synthetic::{build_synthetic_example, demonstration_recommendations, SyntheticExample, SYNTHETIC_LIKED_SHARE};
pub use templates::{placeholders, render, Templates};

pub const LESS_POPULAR_SENTENCE: &str = "Try to recommend movies that are less popular.";

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("{0:?} prompts need a synthetic demonstration")]
    MissingDemonstration(PromptStyle),
    #[error("zero-shot prompts take no demonstration")]
    NoDemonstrationForZeroShot,
    #[error("no example items to show")]
    NoExamples,
    #[error("catalog has {available} eligible items, need {needed}")]
    CatalogTooSmall { available: usize, needed: usize },
    #[error("invalid session configuration: {0}")]
    InvalidConfig(String),
    #[error("template error: {0}")]
    Template(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptStyle {
    Zero,
    Few,
    Cot,
}

impl PromptStyle {
    pub fn as_str(self) -> &'static str {
        match self {
            PromptStyle::Zero => "zero",
            PromptStyle::Few => "few",
            PromptStyle::Cot => "cot",
        }
    }

    pub fn needs_demonstration(self) -> bool {
        self != PromptStyle::Zero
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptPopular {
    Yes,
    No,
}

impl PromptPopular {
    pub fn as_str(self) -> &'static str {
        match self {
            PromptPopular::Yes => "yes",
            PromptPopular::No => "no",
        }
    }
}

/// Parameters of one conversation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub k: usize,
    pub k_f: usize,
    pub p: usize,
    pub prompt_style: PromptStyle,
    pub release_cutoff: i32,
    pub prompt_popular: PromptPopular,
    pub temperature: f64,
    pub title_threshold: f64,
    pub q: f64,
    pub seed: u64,
}

impl SessionConfig {
    pub fn validate(&self, catalog_max_year: Option<i32>) -> Result<(), PromptError> {
        let bad = |m: String| Err(PromptError::InvalidConfig(m));
        if self.p < 1 || self.k < 1 || self.k_f < 1 {
            return bad(format!("k, k_f and p must be at least 1 (k={}, k_f={}, p={})", self.k, self.k_f, self.p));
        }
        if !(self.temperature >= 0.0) {
            return bad(format!("temperature must be non-negative, got {}", self.temperature));
        }
        if !(self.title_threshold > 0.0 && self.title_threshold <= 1.0) {
            return bad(format!("title_threshold must lie in (0, 1], got {}", self.title_threshold));
        }
        if !(self.q > 0.0 && self.q < 1.0) {
            return bad(format!("q must lie in (0, 1), got {}", self.q));
        }
        if let Some(max) = catalog_max_year {
            if self.release_cutoff > max {
                return bad(format!("release_cutoff {} is after the newest catalog item ({max})", self.release_cutoff));
            }
        }
        Ok(())
    }

    /// Recommendations requested by the first prompt.
    pub fn initial_count(&self) -> usize {
        if self.p == 1 {
            self.k_f
        } else {
            self.k
        }
    }
}

fn movies(n: usize) -> &'static str {
    if n == 1 {
        "movie"
    } else {
        "movies"
    }
}

fn less_popular(pp: PromptPopular) -> String {
    match pp {
        PromptPopular::Yes => String::new(),
        PromptPopular::No => format!("\n{LESS_POPULAR_SENTENCE}"),
    }
}

pub(crate) fn marked_lines<S: AsRef<str>>(examples: &[(S, bool)]) -> String {
    examples
        .iter()
        .map(|(t, liked)| format!("- {} [{}]", t.as_ref(), if *liked { "liked" } else { "disliked" }))
        .collect::<Vec<_>>()
        .join("\n")
}

fn title_lines<S: AsRef<str>>(titles: &[S]) -> String {
    if titles.is_empty() {
        return "(none)".to_string();
    }
    titles.iter().map(|t| format!("- {}", t.as_ref())).collect::<Vec<_>>().join("\n")
}

pub(crate) fn numbered<S: AsRef<str>>(titles: &[S]) -> String {
    titles
        .iter()
        .enumerate()
        .map(|(i, t)| format!("{}. {}", i + 1, t.as_ref()))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Renders prompts from a template set.
#[derive(Clone, Debug, Default)]
pub struct PromptBuilder {
    templates: Templates,
}

impl PromptBuilder {
    pub fn new(templates: Templates) -> Self {
        Self { templates }
    }

    pub fn templates(&self) -> &Templates {
        &self.templates
    }

    pub fn initial<S: AsRef<str>>(
        &self,
        config: &SessionConfig,
        examples: &[(S, bool)],
        synthetic: Option<&SyntheticExample>,
    ) -> Result<String, PromptError> {
        if examples.is_empty() {
            return Err(PromptError::NoExamples);
        }
        let n = config.initial_count();
        let k = n.to_string();
        let cutoff = config.release_cutoff.to_string();
        let ex = marked_lines(examples);
        let lp = less_popular(config.prompt_popular);
        let mut values = vec![
            ("examples", ex.as_str()),
            ("k", k.as_str()),
            ("movies", movies(n)),
            ("release_cutoff", cutoff.as_str()),
            ("less_popular", lp.as_str()),
        ];
        let demo;
        let name = match (config.prompt_style, synthetic) {
            (PromptStyle::Zero, None) => "initial_zero",
            (PromptStyle::Zero, Some(_)) => return Err(PromptError::NoDemonstrationForZeroShot),
            (style, None) => return Err(PromptError::MissingDemonstration(style)),
            (style, Some(s)) => {
                demo = self.demonstration(s, style)?;
                values.push(("demonstration", demo.as_str()));
                if style == PromptStyle::Few {
                    "initial_few"
                } else {
                    "initial_cot"
                }
            }
        };
        self.templates.render(name, &values)
    }

    fn demonstration(&self, s: &SyntheticExample, style: PromptStyle) -> Result<String, PromptError> {
        let examples: Vec<(&str, bool)> = s
            .liked
            .iter()
            .map(|(_, t)| (t.as_str(), true))
            .chain(s.disliked.iter().map(|(_, t)| (t.as_str(), false)))
            .collect();
        let reasoning = if style == PromptStyle::Cot && !s.reasoning.is_empty() {
            format!("Reasoning:\n{}\n", s.reasoning.join("\n"))
        } else {
            String::new()
        };
        let recs: Vec<&str> = s.recommendations.iter().map(|(_, t)| t.as_str()).collect();
        self.templates.render(
            "demonstration",
            &[
                ("demo_examples", marked_lines(&examples).as_str()),
                ("reasoning", reasoning.as_str()),
                ("demo_recommendations", numbered(&recs).as_str()),
            ],
        )
    }

    /// The liked / disliked block; `(none)` stands in for an empty side.
    pub fn feedback<S: AsRef<str>>(&self, good: &[S], bad: &[S]) -> Result<String, PromptError> {
        self.templates.render(
            "feedback",
            &[("liked", title_lines(good).as_str()), ("disliked", title_lines(bad).as_str())],
        )
    }

    /// Feedback plus a request for `k` new titles. With nothing judged the
    /// prompt makes no feedback claims and just asks for different titles.
    pub fn reprompt<S: AsRef<str>>(
        &self,
        config: &SessionConfig,
        good: &[S],
        bad: &[S],
        k: usize,
    ) -> Result<String, PromptError> {
        let ks = k.to_string();
        let cutoff = config.release_cutoff.to_string();
        let lp = less_popular(config.prompt_popular);
        let mut values = vec![
            ("k", ks.as_str()),
            ("movies", movies(k)),
            ("release_cutoff", cutoff.as_str()),
            ("less_popular", lp.as_str()),
        ];
        if good.is_empty() && bad.is_empty() {
            return self.templates.render("reprompt_empty", &values);
        }
        let fb = self.feedback(good, bad)?;
        values.push(("feedback", fb.as_str()));
        self.templates.render("reprompt", &values)
    }

    pub fn final_prompt(&self, config: &SessionConfig) -> Result<String, PromptError> {
        let kf = config.k_f.to_string();
        let cutoff = config.release_cutoff.to_string();
        let lp = less_popular(config.prompt_popular);
        self.templates.render(
            "final",
            &[
                ("k_f", kf.as_str()),
                ("movies", movies(config.k_f)),
                ("release_cutoff", cutoff.as_str()),
                ("less_popular", lp.as_str()),
            ],
        )
    }

    /// Last turn of a multi-turn session: feedback on the previous list,
    /// then the final-list request.
    pub fn final_turn<S: AsRef<str>>(&self, config: &SessionConfig, good: &[S], bad: &[S]) -> Result<String, PromptError> {
        Ok(format!("{}\n\n{}", self.feedback(good, bad)?, self.final_prompt(config)?))
    }
}

pub fn build_initial_prompt<S: AsRef<str>>(
    config: &SessionConfig,
    examples: &[(S, bool)],
    synthetic: Option<&SyntheticExample>,
) -> Result<String, PromptError> {
    PromptBuilder::default().initial(config, examples, synthetic)
}

pub fn build_reprompt<S: AsRef<str>>(
    config: &SessionConfig,
    good: &[S],
    bad: &[S],
    k: usize,
) -> Result<String, PromptError> {
    PromptBuilder::default().reprompt(config, good, bad, k)
}

pub fn build_final_prompt(config: &SessionConfig) -> Result<String, PromptError> {
    PromptBuilder::default().final_prompt(config)
}

#[cfg(test)]
pub(crate) fn test_config(style: PromptStyle) -> SessionConfig {
    SessionConfig {
        k: 10,
        k_f: 20,
        p: 5,
        prompt_style: style,
        release_cutoff: 2011,
        prompt_popular: PromptPopular::Yes,
        temperature: 0.0,
        title_threshold: 0.75,
        q: 0.99,
        seed: 22222,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ItemId;

    fn examples(n: usize) -> Vec<(String, bool)> {
        (0..n).map(|i| (format!("Film Number{i} (19{:02})", 50 + i), i % 3 != 0)).collect()
    }

    fn demo() -> SyntheticExample {
        let t = |id: &str, title: &str| (ItemId::from(id), title.to_string());
        SyntheticExample {
            liked: vec![t("1", "Alpha (1990)"), t("2", "Beta (1991)")],
            disliked: vec![t("3", "Gamma (1992)")],
            recommendations: vec![t("4", "Delta (1993)"), t("5", "Epsilon (1994)")],
            reasoning: vec![
                "step 1: a".into(),
                "step 2: b".into(),
                "step 3: c".into(),
                "step 4: d".into(),
            ],
        }
    }

    fn count(hay: &str, needle: &str) -> usize {
        hay.matches(needle).count()
    }

    #[test]
    fn zero_shot_contains_every_example_and_count() {
        let cfg = test_config(PromptStyle::Zero);
        let ex = examples(10);
        let text = build_initial_prompt(&cfg, &ex, None).unwrap();
        for (t, liked) in &ex {
            let m = format!("- {t} [{}]", if *liked { "liked" } else { "disliked" });
            assert_eq!(count(&text, &m), 1);
        }
        assert!(text.contains("exactly 10 movies"));
        assert!(text.contains("in or before 2011"));
        assert!(!text.contains(LESS_POPULAR_SENTENCE));
        assert!(!text.contains("Example"));
    }

    #[test]
    fn single_turn_asks_for_final_count() {
        let mut cfg = test_config(PromptStyle::Zero);
        cfg.p = 1;
        let text = build_initial_prompt(&cfg, &examples(3), None).unwrap();
        assert!(text.contains("exactly 20 movies"));
    }

    #[test]
    fn less_popular_sentence_is_verbatim() {
        let mut cfg = test_config(PromptStyle::Zero);
        cfg.prompt_popular = PromptPopular::No;
        let text = build_initial_prompt(&cfg, &examples(3), None).unwrap();
        assert!(text.ends_with("\nTry to recommend movies that are less popular."));
        let re = build_reprompt(&cfg, &["A (2000)"], &[], 10).unwrap();
        assert_eq!(count(&re, LESS_POPULAR_SENTENCE), 1);
        assert_eq!(count(&build_final_prompt(&cfg).unwrap(), LESS_POPULAR_SENTENCE), 1);
    }

    #[test]
    fn demonstration_block_per_style() {
        let d = demo();
        let few = build_initial_prompt(&test_config(PromptStyle::Few), &examples(3), Some(&d)).unwrap();
        let cot = build_initial_prompt(&test_config(PromptStyle::Cot), &examples(3), Some(&d)).unwrap();
        assert_eq!(count(&few, "--- Example ---"), 1);
        assert_eq!(count(&cot, "--- Example ---"), 1);
        assert!(!few.contains("step 1:"));
        assert!(cot.contains("Reasoning:\nstep 1: a\nstep 2: b\nstep 3: c\nstep 4: d\nRecommendations:"));
        assert!(few.contains("1. Delta (1993)\n2. Epsilon (1994)"));

        assert!(matches!(
            build_initial_prompt(&test_config(PromptStyle::Cot), &examples(3), None),
            Err(PromptError::MissingDemonstration(PromptStyle::Cot))
        ));
        assert!(matches!(
            build_initial_prompt(&test_config(PromptStyle::Zero), &examples(3), Some(&d)),
            Err(PromptError::NoDemonstrationForZeroShot)
        ));
        assert!(matches!(
            build_initial_prompt::<String>(&test_config(PromptStyle::Zero), &[], None),
            Err(PromptError::NoExamples)
        ));
    }

    #[test]
    fn reprompt_branches() {
        let cfg = test_config(PromptStyle::Zero);
        let both = build_reprompt(&cfg, &["A (2000)"], &["B (2001)"], 10).unwrap();
        assert!(both.contains("I liked:\n- A (2000)\nI did not like:\n- B (2001)"));
        assert!(both.contains("exactly 10 more movies"));
        assert!(both.contains("Do not repeat any movie you have already recommended."));

        let none_liked = build_reprompt(&cfg, &[], &["B (2001)"], 10).unwrap();
        assert!(none_liked.contains("I liked:\n(none)\n"));

        let empty = build_reprompt::<&str>(&cfg, &[], &[], 7).unwrap();
        assert!(empty.starts_with("None of these could be evaluated; recommend 7 different movies"));
        assert!(!empty.contains("I liked"));
    }

    #[test]
    fn final_prompt_framing() {
        let mut cfg = test_config(PromptStyle::Zero);
        let text = build_final_prompt(&cfg).unwrap();
        assert!(text.contains("exactly 20 movies") && text.contains("final list"));
        cfg.k_f = 1;
        assert!(build_final_prompt(&cfg).unwrap().contains("exactly 1 movie released"));
    }

    #[test]
    fn config_validation() {
        let mut cfg = test_config(PromptStyle::Zero);
        assert!(cfg.validate(Some(2011)).is_ok());
        assert!(cfg.validate(Some(2010)).is_err());
        cfg.p = 0;
        assert!(cfg.validate(None).is_err());
    }

    #[test]
    fn rendering_is_deterministic() {
        let cfg = test_config(PromptStyle::Cot);
        let a = build_initial_prompt(&cfg, &examples(5), Some(&demo())).unwrap();
        let b = build_initial_prompt(&cfg, &examples(5), Some(&demo())).unwrap();
        assert_eq!(a, b);
    }
}
