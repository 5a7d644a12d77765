//! Prompt template sets.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::model::TaskId;

pub const ANSWER_MARKER: &str = "Answer:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PromptMode {
    ZeroShot,
    FewShot,
}

/// Text blocks with `{fact_query}`, `{fact_answer}`, `{question}` and
/// `{answer}` placeholders, plus a preamble per task and mode.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateSet {
    pub id: String,
    pub demo: String,
    pub live: String,
    pub preamble: Preambles,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Preambles {
    pub few_shot: BTreeMap<String, String>,
    pub zero_shot: BTreeMap<String, String>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TemplateSetError {
    #[error("unknown template set {0:?}")]
    Unknown(String),
    #[error("{block} block must contain {placeholder}")]
    MissingPlaceholder {
        block: &'static str,
        placeholder: &'static str,
    },
    #[error("live block must not contain {{answer}}")]
    LiveHasAnswer,
    #[error("live block must end with {ANSWER_MARKER:?}")]
    NoElicitation,
    #[error("no {mode} preamble for task {task} and no default")]
    MissingPreamble { mode: &'static str, task: String },
    #[error("template file: {0}")]
    Parse(String),
}

const QA_PREAMBLE: &str = "Each new fact below is followed by a question. \
Answer in the language of the question. If the question depends on the new fact, \
answer it using the new fact; otherwise answer it as you normally would.\n\n";

const CLOZE_PREAMBLE: &str = "Each new fact below is followed by an incomplete statement. \
Complete it in the language of the statement. If the statement depends on the new fact, \
complete it using the new fact; otherwise complete it as you normally would.\n\n";

const QA_ZERO: &str = "Use the new fact to answer the question, in the language of the question.\n\n";

const CLOZE_ZERO: &str = "Use the new fact to complete the statement, in the language of the statement.\n\n";

impl TemplateSet {
    /// The canonical set, `mike-v1`.
    pub fn mike_v1() -> Self {
        let map = |qa: &str, cloze: &str| {
            BTreeMap::from([
                ("default".to_string(), qa.to_string()),
                ("counterfact".to_string(), cloze.to_string()),
                ("wfd".to_string(), cloze.to_string()),
            ])
        };
        TemplateSet {
            id: "mike-v1".into(),
            demo: "New Fact: {fact_query} {fact_answer}\nQuestion: {question}\nAnswer: {answer}\n\n".into(),
            live: "New Fact: {fact_query} {fact_answer}\nQuestion: {question}\nAnswer:".into(),
            preamble: Preambles {
                few_shot: map(QA_PREAMBLE, CLOZE_PREAMBLE),
                zero_shot: map(QA_ZERO, CLOZE_ZERO),
            },
        }
    }

    pub fn builtin(id: &str) -> Result<Self, TemplateSetError> {
        match id {
            "mike-v1" => Ok(Self::mike_v1()),
            other => Err(TemplateSetError::Unknown(other.to_string())),
        }
    }

    /// Loads an alternate set from a TOML file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, TemplateSetError> {
        let text = fs::read_to_string(path).map_err(|e| TemplateSetError::Parse(e.to_string()))?;
        let set: TemplateSet = toml::from_str(&text).map_err(|e| TemplateSetError::Parse(e.to_string()))?;
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<(), TemplateSetError> {
        for placeholder in ["{fact_query}", "{fact_answer}", "{question}", "{answer}"] {
            if !self.demo.contains(placeholder) {
                return Err(TemplateSetError::MissingPlaceholder {
                    block: "demo",
                    placeholder,
                });
            }
        }
        for placeholder in ["{fact_query}", "{fact_answer}", "{question}"] {
            if !self.live.contains(placeholder) {
                return Err(TemplateSetError::MissingPlaceholder {
                    block: "live",
                    placeholder,
                });
            }
        }
        if self.live.contains("{answer}") {
            return Err(TemplateSetError::LiveHasAnswer);
        }
        if !self.live.ends_with(ANSWER_MARKER) {
            return Err(TemplateSetError::NoElicitation);
        }
        for task in TaskId::ALL {
            self.preamble_for(task, PromptMode::FewShot)?;
            self.preamble_for(task, PromptMode::ZeroShot)?;
        }
        Ok(())
    }

    pub fn preamble_for(&self, task: TaskId, mode: PromptMode) -> Result<&str, TemplateSetError> {
        let (map, name) = match mode {
            PromptMode::FewShot => (&self.preamble.few_shot, "few_shot"),
            PromptMode::ZeroShot => (&self.preamble.zero_shot, "zero_shot"),
        };
        map.get(task.as_str())
            .or_else(|| map.get("default"))
            .map(String::as_str)
            .ok_or_else(|| TemplateSetError::MissingPreamble {
                mode: name,
                task: task.to_string(),
            })
    }
}

/// Single-pass substitution, so placeholder-like text inside values is
/// never expanded.
pub(crate) fn fill(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 64);
    let mut rest = template;
    while let Some(start) = rest.find('{') {
        out.push_str(&rest[..start]);
        let tail = &rest[start..];
        match values.iter().find(|(k, _)| tail.starts_with(k)) {
            Some((k, v)) => {
                out.push_str(v);
                rest = &tail[k.len()..];
            }
            None => {
                out.push('{');
                rest = &tail[1..];
            }
        }
    }
    out.push_str(rest);
    out
}
