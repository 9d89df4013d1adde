use std::collections::BTreeMap;
use std::path::Path;

use super::PromptError;

const BUILTIN: &[(&str, &str)] = &[
    ("initial_zero", include_str!("../../templates/initial_zero.txt")),
    ("initial_few", include_str!("../../templates/initial_few.txt")),
    ("initial_cot", include_str!("../../templates/initial_cot.txt")),
    ("demonstration", include_str!("../../templates/demonstration.txt")),
    ("feedback", include_str!("../../templates/feedback.txt")),
    ("reprompt", include_str!("../../templates/reprompt.txt")),
    ("reprompt_empty", include_str!("../../templates/reprompt_empty.txt")),
    ("final", include_str!("../../templates/final.txt")),
];

/// The prompt template set. Trailing whitespace of each file is dropped.
#[derive(Clone, Debug)]
pub struct Templates {
    texts: BTreeMap<&'static str, String>,
}

impl Default for Templates {
    fn default() -> Self {
        Self {
            texts: BUILTIN.iter().map(|(k, v)| (*k, v.trim_end().to_string())).collect(),
        }
    }
}

impl Templates {
    /// Built-in templates, with any `<name>.txt` found in `dir` taking
    /// precedence.
    pub fn with_overrides(dir: &Path) -> Result<Self, PromptError> {
        let mut t = Self::default();
        for (name, _) in BUILTIN {
            let path = dir.join(format!("{name}.txt"));
            if path.exists() {
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| PromptError::Template(format!("{}: {e}", path.display())))?;
                t.texts.insert(name, text.trim_end().to_string());
            }
        }
        Ok(t)
    }

    pub fn get(&self, name: &str) -> &str {
        self.texts.get(name).map(String::as_str).unwrap_or_else(|| panic!("unknown template {name}"))
    }

    pub fn render(&self, name: &str, values: &[(&str, &str)]) -> Result<String, PromptError> {
        render(self.get(name), values).map_err(|e| PromptError::Template(format!("{name}: {e}")))
    }
}

/// Names of all `{placeholder}` markers in `template`, in order of
/// appearance (with repeats).
pub fn placeholders(template: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = template;
    while let Some(start) = rest.find('{') {
        let after = &rest[start + 1..];
        match after.find('}') {
            Some(end) if is_ident(&after[..end]) => {
                out.push(&after[..end]);
                rest = &after[end + 1..];
            }
            _ => rest = after,
        }
    }
    out
}

fn is_ident(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_lowercase() || c == '_')
}

/// Replaces every `{name}` in `template`. A marker without a value is an
/// error; unused values are ignored.
pub fn render(template: &str, values: &[(&str, &str)]) -> Result<String, String> {
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    while let Some(start) = rest.find('{') {
        out.push_str(&rest[..start]);
        let after = &rest[start + 1..];
        match after.find('}') {
            Some(end) if is_ident(&after[..end]) => {
                let name = &after[..end];
                let value = values
                    .iter()
                    .find(|(k, _)| *k == name)
                    .ok_or_else(|| format!("no value for {{{name}}}"))?;
                out.push_str(value.1);
                rest = &after[end + 1..];
            }
            _ => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_replaces_and_rejects_missing() {
        assert_eq!(render("a {x} b {x} {y}", &[("x", "1"), ("y", "2")]).unwrap(), "a 1 b 1 2");
        assert!(render("{z}", &[]).is_err());
        assert_eq!(render("{ not a marker }", &[]).unwrap(), "{ not a marker }");
    }

    #[test]
    fn builtin_templates_use_documented_placeholders() {
        let t = Templates::default();
        assert_eq!(placeholders(t.get("feedback")), vec!["liked", "disliked"]);
        assert_eq!(placeholders(t.get("final")), vec!["k_f", "movies", "release_cutoff", "less_popular"]);
        for name in ["initial_few", "initial_cot"] {
            assert_eq!(placeholders(t.get(name)).iter().filter(|p| **p == "demonstration").count(), 1);
        }
        assert!(!placeholders(t.get("initial_zero")).contains(&"demonstration"));
    }

    #[test]
    fn directory_overrides_single_file() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("final.txt"), "Final {k_f}.\n").unwrap();
        let t = Templates::with_overrides(dir.path()).unwrap();
        assert_eq!(t.get("final"), "Final {k_f}.");
        assert_eq!(t.get("feedback"), Templates::default().get("feedback"));
    }
}
