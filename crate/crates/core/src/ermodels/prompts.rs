use std::collections::BTreeMap;

/// Version of the bundled prompt texts; part of every run record.
pub const PROMPT_SET_VERSION: &str = "1";

/// A prompt with `{name}` placeholders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub prompt_id: &'static str,
    pub text: &'static str,
}

/// Rendering failure.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("unknown prompt {0:?}")]
    Unknown(String),
    #[error("prompt {prompt_id}: unbound placeholder {{{name}}}")]
    Unbound { prompt_id: String, name: String },
    #[error("prompt {prompt_id}: unterminated placeholder")]
    Malformed { prompt_id: String },
}

static REGISTRY: &[PromptTemplate] = &[
    PromptTemplate {
        prompt_id: "er_study1",
        text: include_str!("../../assets/prompts/er_study1.txt"),
    },
    PromptTemplate {
        prompt_id: "er_study2",
        text: include_str!("../../assets/prompts/er_study2.txt"),
    },
    PromptTemplate {
        prompt_id: "vlm_classifier",
        text: include_str!("../../assets/prompts/vlm_classifier.txt"),
    },
    PromptTemplate {
        prompt_id: "apology_adapt",
        text: include_str!("../../assets/prompts/apology_adapt.txt"),
    },
];

/// Looks a bundled prompt up by id.
pub fn prompt(prompt_id: &str) -> Result<&'static PromptTemplate, PromptError> {
    REGISTRY
        .iter()
        .find(|p| p.prompt_id == prompt_id)
        .ok_or_else(|| PromptError::Unknown(prompt_id.to_string()))
}

/// All bundled prompts.
pub fn prompts() -> &'static [PromptTemplate] {
    REGISTRY
}

fn is_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl PromptTemplate {
    /// Placeholder names in order of appearance.
    pub fn placeholders(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        let mut rest = self.text;
        while let Some(i) = rest.find('{') {
            let after = &rest[i + 1..];
            match after.find('}') {
                Some(j) if is_name(&after[..j]) => {
                    out.push(&after[..j]);
                    rest = &after[j + 1..];
                }
                _ => rest = after,
            }
        }
        out
    }

    /// Substitutes every placeholder; fails if any is unbound.
    pub fn render(&self, vars: &BTreeMap<&str, &str>) -> Result<String, PromptError> {
        let mut out = String::with_capacity(self.text.len());
        let mut rest = self.text;
        while let Some(i) = rest.find('{') {
            out.push_str(&rest[..i]);
            let after = &rest[i + 1..];
            let Some(j) = after.find('}') else {
                return Err(PromptError::Malformed {
                    prompt_id: self.prompt_id.into(),
                });
            };
            let name = &after[..j];
            if !is_name(name) {
                out.push('{');
                rest = after;
                continue;
            }
            let value = vars.get(name).ok_or_else(|| PromptError::Unbound {
                prompt_id: self.prompt_id.into(),
                name: name.into(),
            })?;
            out.push_str(value);
            rest = &after[j + 1..];
        }
        out.push_str(rest);
        Ok(out)
    }
}
